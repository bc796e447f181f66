#include "dkp/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "dkp/errors.hpp"

namespace dkp {

namespace {

void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 4);
}

void put_f64(std::ostream& os, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 8);
}

std::uint32_t get_u32(std::istream& is, const std::string& path) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4)) throw IoError(path + ": truncated checkpoint");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

double get_f64(std::istream& is, const std::string& path) {
    unsigned char b[8];
    if (!is.read(reinterpret_cast<char*>(b), 8)) throw IoError(path + ": truncated checkpoint");
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

std::string shape_str(const std::vector<int>& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
    os << ']';
    return os.str();
}

}  // namespace

void save_checkpoint(const Model& model, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open '" + path + "' for writing");
    f.write(kCheckpointMagic, 7);
    for (int i = 0; i < 3; ++i) put_f64(f, model.stats.mean[i]);
    for (int i = 0; i < 3; ++i) put_f64(f, model.stats.scale[i]);
    put_u32(f, static_cast<std::uint32_t>(model.params.size()));
    for (const auto& t : model.params.tensors()) {
        put_u32(f, static_cast<std::uint32_t>(t.name.size()));
        f.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
        put_u32(f, static_cast<std::uint32_t>(t.shape.size()));
        for (int d : t.shape) put_u32(f, static_cast<std::uint32_t>(d));
        for (Eigen::Index i = 0; i < t.value.size(); ++i) put_f64(f, t.value[i]);
    }
    if (!f.flush()) throw IoError("write failed for '" + path + "'");
}

Model load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open '" + path + "' for reading");

    char magic[7];
    if (!f.read(magic, 7) || std::memcmp(magic, kCheckpointMagic, 7) != 0) {
        throw IoError(path + ": bad checkpoint magic (expected \"" +
                      std::string(kCheckpointMagic) + "\"); wrong or corrupted file version");
    }

    Model model = Model::create();
    for (int i = 0; i < 3; ++i) model.stats.mean[i] = get_f64(f, path);
    for (int i = 0; i < 3; ++i) model.stats.scale[i] = get_f64(f, path);
    try {
        model.stats.validate();
    } catch (const InvalidInputError& e) {
        throw IoError(path + ": " + e.what());
    }

    const std::uint32_t count = get_u32(f, path);
    if (count != model.params.size()) {
        throw IoError(path + ": expected " + std::to_string(model.params.size()) +
                      " tensors, found " + std::to_string(count));
    }
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint32_t name_len = get_u32(f, path);
        if (name_len > 4096) throw IoError(path + ": implausible tensor name length");
        std::string name(name_len, '\0');
        if (!f.read(name.data(), name_len)) throw IoError(path + ": truncated checkpoint");
        const int idx = model.params.index_of(name);
        if (idx < 0) throw IoError(path + ": unexpected tensor '" + name + "'");
        auto& tensor = model.params.at(idx);

        const std::uint32_t ndim = get_u32(f, path);
        std::vector<int> shape(ndim);
        for (auto& d : shape) d = static_cast<int>(get_u32(f, path));
        if (shape != tensor.shape) {
            throw IoError(path + ": tensor '" + name + "' has shape " + shape_str(shape) +
                          ", expected " + shape_str(tensor.shape));
        }
        for (Eigen::Index e = 0; e < tensor.value.size(); ++e) tensor.value[e] = get_f64(f, path);
        if (!tensor.value.allFinite()) {
            throw IoError(path + ": tensor '" + name + "' contains non-finite values");
        }
    }
    return model;
}

}  // namespace dkp
