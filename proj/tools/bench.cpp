// Benchmark comparing the OpenMP-parallel smoothing and batch-gradient
// kernels against their serial reference implementations.

#include <chrono>
#include <cstdio>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "dkp/edlkf.hpp"
#include "dkp/synthdata.hpp"
#include "dkp/training.hpp"

using namespace dkp;
using Clock = std::chrono::steady_clock;

namespace {

double ms_since(Clock::time_point start) {
    return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

template <typename F>
double time_best_of(int reps, F&& fn) {
    double best = 1e300;
    for (int r = 0; r < reps; ++r) {
        const auto t0 = Clock::now();
        fn();
        best = std::min(best, ms_since(t0));
    }
    return best;
}

}  // namespace

int main(int argc, char** argv) {
    std::size_t n_traj = 40;
    std::size_t batch = 64;
    if (argc > 1) n_traj = static_cast<std::size_t>(std::atoll(argv[1]));
    if (argc > 2) batch = static_cast<std::size_t>(std::atoll(argv[2]));

#ifdef _OPENMP
    const int max_threads = omp_get_max_threads();
#else
    const int max_threads = 1;
#endif
    std::printf("threads available: %d\n", max_threads);

    ScenarioConfig sc;
    sc.n_trajectories = n_traj;
    sc.min_length = 50;
    sc.max_length = 70;
    sc.seed = 7;
    const auto [gts, noisies] = generate_scenario(sc, NoiseModel{});

    Model model = Model::create();
    model.stats.mean = Eigen::Vector3d(0, 1.2, 30);
    model.stats.scale = Eigen::Vector3d(5, 0.5, 15);
    model.init(1);

    std::size_t n_segments = 0;
    for (const auto& t : noisies) n_segments += t.size() >= 20 ? t.size() - 19 : 0;
    std::printf("\nsegment smoothing: %zu trajectories, %zu stride-1 segments of T=20\n",
                noisies.size(), n_segments);

    const double serial_ms = time_best_of(3, [&] {
        for (const auto& t : noisies) smooth_trajectory_serial(t, model, 20);
    });
    SmoothOptions par;
    par.threads = 0;
    const double parallel_ms = time_best_of(3, [&] {
        for (const auto& t : noisies) smooth_trajectory(t, model, 20, par);
    });
    std::printf("  serial reference : %8.1f ms  (%.0f segments/s)\n", serial_ms,
                1000.0 * static_cast<double>(n_segments) / serial_ms);
    std::printf("  openmp parallel  : %8.1f ms  (%.0f segments/s)\n", parallel_ms,
                1000.0 * static_cast<double>(n_segments) / parallel_ms);
    std::printf("  speedup          : %8.2fx\n", serial_ms / parallel_ms);

    const auto dataset = build_dataset(noisies, gts, 20, 1);
    std::vector<std::size_t> indices;
    for (std::size_t i = 0; i < batch && i < dataset.size(); ++i) indices.push_back(i);
    std::printf("\nbatch gradients: %zu samples per batch (BPTT over T=20, both branches)\n",
                indices.size());

    const double grad_serial_ms =
        time_best_of(3, [&] { batch_gradients(model, dataset, indices, 1); });
    const double grad_parallel_ms =
        time_best_of(3, [&] { batch_gradients(model, dataset, indices, 0); });
    std::printf("  serial reference : %8.1f ms  (%.0f samples/s)\n", grad_serial_ms,
                1000.0 * static_cast<double>(indices.size()) / grad_serial_ms);
    std::printf("  openmp parallel  : %8.1f ms  (%.0f samples/s)\n", grad_parallel_ms,
                1000.0 * static_cast<double>(indices.size()) / grad_parallel_ms);
    std::printf("  speedup          : %8.2fx\n", grad_serial_ms / grad_parallel_ms);
    return 0;
}
