#include <cmath>
#include <filesystem>
#include <fstream>

#include "dkp/checkpoint.hpp"
#include "dkp/errors.hpp"
#include "dkp/rng.hpp"
#include "dkp/synthdata.hpp"
#include "dkp/training.hpp"
#include "doctest.h"
#include "test_helpers.hpp"

using namespace dkp;

namespace {

std::vector<Pose> constant_poses(std::size_t n, const Pose& p) {
    return std::vector<Pose>(n, p);
}

TrainSample synthetic_sample(std::uint64_t seed, std::size_t t_len = 20) {
    MotionPattern p;
    p.kind = MotionKind::ConstantTurnRate;
    p.initial = Pose(2.0, 1.2, 28.0, 0.3);
    p.speed = 7.0;
    p.yaw_rate = 0.15;
    NoiseModel noise;
    noise.outlier_prob = 0.0;
    const auto [gt, noisy] = generate_trajectory(p, noise, t_len, seed);

    TrainSample s;
    s.input_segment.items = noisy.poses;
    s.input_segment.direction = Direction::Forward;
    for (const auto& m : gt.poses) s.target.push_back(m.pose);
    return s;
}

std::vector<TrainSample> small_dataset(std::size_t n, std::size_t t_len) {
    std::vector<TrainSample> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(synthetic_sample(500 + i, t_len));
    return out;
}

Model seeded_model(std::uint64_t seed) {
    Model m = Model::create();
    m.stats.mean = Eigen::Vector3d(1.0, 1.2, 26.0);
    m.stats.scale = Eigen::Vector3d(3.0, 0.4, 8.0);
    m.init(seed);
    return m;
}

bool files_identical(const std::filesystem::path& a, const std::filesystem::path& b) {
    std::ifstream fa(a, std::ios::binary), fb(b, std::ios::binary);
    const std::string ca((std::istreambuf_iterator<char>(fa)), std::istreambuf_iterator<char>());
    const std::string cb((std::istreambuf_iterator<char>(fb)), std::istreambuf_iterator<char>());
    return !ca.empty() && ca == cb;
}

}  // namespace

TEST_CASE("segment_loss values") {
    const Pose t(1, 2, 3, 0.4);
    CHECK(segment_loss(constant_poses(5, t), constant_poses(5, t)) == 0.0);

    // single step, translation exact, yaw off by pi -> 1 - cos(pi) = 2
    CHECK(segment_loss({Pose(1, 2, 3, 0.4 + M_PI)}, {t}) == doctest::Approx(2.0));
    // single step, x off by one -> 1
    CHECK(segment_loss({Pose(2, 2, 3, 0.4)}, {t}) == doctest::Approx(1.0));

    CHECK_THROWS_AS(segment_loss(constant_poses(3, t), constant_poses(4, t)), InvalidInputError);
    CHECK_THROWS_AS(segment_loss({}, {}), InvalidInputError);
}

TEST_CASE("segment_loss is non-negative and 2pi-invariant in yaw") {
    Rng rng(1);
    for (int i = 0; i < 100; ++i) {
        const Pose pred(rng.normal(), rng.normal(), rng.normal(), rng.uniform(-3, 3));
        const Pose target(rng.normal(), rng.normal(), rng.normal(), rng.uniform(-3, 3));
        const double base = segment_loss({pred}, {target});
        CHECK(base >= 0.0);
        const Pose shifted(pred.x, pred.y, pred.z, pred.theta + 2 * M_PI);
        CHECK(segment_loss({shifted}, {target}) == doctest::Approx(base).epsilon(1e-12));
    }
    // equality iff exact translations and matching yaw modulo 2pi
    CHECK(segment_loss({Pose(1, 2, 3, 0.5 + 2 * M_PI)}, {Pose(1, 2, 3, 0.5)}) ==
          doctest::Approx(0.0));
}

TEST_CASE("adam: zero gradient leaves parameters untouched") {
    Model m = seeded_model(3);
    const Eigen::VectorXd before = m.params.at(0).value;
    AdamOptimizer adam(m.params);
    GradBuffer zero;
    zero.init(m.params);
    TrainConfig cfg;
    cfg.weight_decay = 0.0;
    adam.step(m.params, zero, cfg, 1);
    CHECK((m.params.at(0).value - before).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("adam: first step moves by about lr times the gradient sign") {
    Model m = seeded_model(5);
    AdamOptimizer adam(m.params);
    GradBuffer g;
    g.init(m.params);
    Rng rng(9);
    for (auto& v : g.g) {
        for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = rng.normal() * 10.0;  // |g| >> eps
    }
    std::vector<Eigen::VectorXd> before;
    for (const auto& t : m.params.tensors()) before.push_back(t.value);

    TrainConfig cfg;
    cfg.weight_decay = 0.0;
    cfg.learning_rate = 0.001;
    adam.step(m.params, g, cfg, 1);
    for (std::size_t i = 0; i < m.params.size(); ++i) {
        const Eigen::VectorXd delta = m.params.at(static_cast<int>(i)).value - before[i];
        for (Eigen::Index e = 0; e < delta.size(); ++e) {
            CHECK(delta[e] == doctest::Approx(-cfg.learning_rate *
                                              (g.g[i][e] > 0 ? 1.0 : -1.0)).epsilon(1e-3));
        }
    }
}

TEST_CASE("adam: identical tensors receive identical updates") {
    Model m = Model::create();
    m.params.at(m.fwd.gain.bz).value.setConstant(0.25);
    m.params.at(m.bwd.gain.bz).value.setConstant(0.25);
    AdamOptimizer adam(m.params);
    GradBuffer g;
    g.init(m.params);
    g.g[static_cast<std::size_t>(m.fwd.gain.bz)].setConstant(0.7);
    g.g[static_cast<std::size_t>(m.bwd.gain.bz)].setConstant(0.7);
    TrainConfig cfg;
    adam.step(m.params, g, cfg, 1);
    CHECK((m.params.at(m.fwd.gain.bz).value - m.params.at(m.bwd.gain.bz).value)
              .cwiseAbs()
              .maxCoeff() == 0.0);
}

TEST_CASE("backward: zero seed yields zero parameter gradients") {
    Model m = seeded_model(7);
    const TrainSample sample = synthetic_sample(100);

    ad::Tape tape(&m.params);
    GradBuffer grads;
    grads.init(m.params);
    // build the loss graph via the library path, then seed with 0
    sample_loss_backward(m, sample, grads);  // warm call, nonzero
    GradBuffer zero_grads;
    zero_grads.init(m.params);
    ad::Tape t2(&m.params);
    const BranchOutput fwd = run_branch(sample.input_segment, m);
    (void)fwd;
    // dedicated zero-seed check through the tape API
    const int c = t2.constant(Eigen::VectorXd::Constant(1, 2.0));
    const int s = t2.scale(c, 3.0);
    t2.backward(s, zero_grads, 0.0);
    for (const auto& g : zero_grads.g) CHECK(g.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("backward: duplicated sample accumulates exactly twice the gradient") {
    Model m = seeded_model(11);
    const TrainSample sample = synthetic_sample(200);

    GradBuffer once;
    once.init(m.params);
    sample_loss_backward(m, sample, once);

    GradBuffer twice;
    twice.init(m.params);
    sample_loss_backward(m, sample, twice);
    sample_loss_backward(m, sample, twice);

    for (std::size_t i = 0; i < once.g.size(); ++i) {
        // linear accumulation; rounding differs only through the warm buffer
        const double scale = std::max(1.0, once.g[i].cwiseAbs().maxCoeff());
        CHECK((twice.g[i] - 2.0 * once.g[i]).cwiseAbs().maxCoeff() / scale < 1e-12);
    }
}

TEST_CASE("batch mean loss of a duplicated batch equals the single batch") {
    Model m = seeded_model(13);
    std::vector<TrainSample> data = {synthetic_sample(300), synthetic_sample(301)};
    const auto single = batch_gradients(m, data, {0, 1}, 1);
    const auto doubled = batch_gradients(m, data, {0, 1, 0, 1}, 1);
    CHECK(doubled.mean_loss == doctest::Approx(single.mean_loss).epsilon(1e-15));
    for (std::size_t i = 0; i < single.grads.g.size(); ++i) {
        const double scale = std::max(1.0, single.grads.g[i].cwiseAbs().maxCoeff());
        CHECK((doubled.grads.g[i] - single.grads.g[i]).cwiseAbs().maxCoeff() / scale < 1e-12);
    }
}

TEST_CASE("grad_check: analytic gradients match finite differences everywhere") {
    Model m = seeded_model(17);
    const TrainSample sample = synthetic_sample(400);
    const auto report = grad_check(m, sample, 1e-5, 6);
    CAPTURE(report.worst_tensor);
    CHECK(report.max_rel_error < 1e-4);
    CHECK(report.max_abs_error_small < 1e-7);
    CHECK(report.entries.size() == m.params.size());
}

TEST_CASE("grad_check: an injected sign flip is flagged on the right tensor") {
    Model m = seeded_model(19);
    const TrainSample sample = synthetic_sample(401);
    const auto report = grad_check(m, sample, 1e-5, 6, "fwd.sem0.w1");
    CHECK_FALSE(report.pass());
    CHECK(report.worst_tensor == "fwd.sem0.w1");
}

TEST_CASE("grad_check: epsilon range is validated") {
    Model m = seeded_model(23);
    const TrainSample sample = synthetic_sample(402);
    CHECK_THROWS_AS(grad_check(m, sample, 1e-8), InvalidInputError);
    CHECK_THROWS_AS(grad_check(m, sample, 1e-2), InvalidInputError);
}

TEST_CASE("train: zero iterations returns the initialization") {
    const auto data = small_dataset(6, 10);
    TrainConfig cfg;
    cfg.iterations = 0;
    cfg.context_length = 10;
    cfg.batch_size = 4;
    cfg.seed = 99;
    const auto result = train(data, cfg);
    CHECK(result.loss_curve.empty());

    Model reference = Model::create();
    std::vector<TrajectorySegment> segs;
    for (const auto& s : data) segs.push_back(s.input_segment);
    reference.stats = compute_norm_stats(segs);
    reference.init(cfg.seed);
    for (std::size_t i = 0; i < reference.params.size(); ++i) {
        CHECK((result.model.params.at(static_cast<int>(i)).value -
               reference.params.at(static_cast<int>(i)).value)
                  .cwiseAbs()
                  .maxCoeff() == 0.0);
    }
}

TEST_CASE("train: same seed and data give bit-identical checkpoints") {
    const auto data = small_dataset(8, 10);
    TrainConfig cfg;
    cfg.iterations = 5;
    cfg.context_length = 10;
    cfg.batch_size = 4;
    cfg.seed = 7;

    const auto r1 = train(data, cfg);
    const auto r2 = train(data, cfg);
    CHECK(r1.loss_curve == r2.loss_curve);

    const auto dir = std::filesystem::temp_directory_path();
    save_checkpoint(r1.model, (dir / "dkp_t1.bin").string());
    save_checkpoint(r2.model, (dir / "dkp_t2.bin").string());
    CHECK(files_identical(dir / "dkp_t1.bin", dir / "dkp_t2.bin"));
    std::filesystem::remove(dir / "dkp_t1.bin");
    std::filesystem::remove(dir / "dkp_t2.bin");
}

TEST_CASE("train: loss drops on a small dataset") {
    const auto data = small_dataset(16, 10);
    TrainConfig cfg;
    cfg.iterations = 40;
    cfg.context_length = 10;
    cfg.batch_size = 8;
    cfg.seed = 21;
    const auto result = train(data, cfg);
    REQUIRE(result.loss_curve.size() == 40);
    const double head = (result.loss_curve[0] + result.loss_curve[1] + result.loss_curve[2]) / 3;
    const double tail = (result.loss_curve[37] + result.loss_curve[38] + result.loss_curve[39]) / 3;
    CHECK(tail < head);
}

TEST_CASE("train: input validation") {
    TrainConfig cfg;
    CHECK_THROWS_AS(train({}, cfg), InvalidInputError);

    auto data = small_dataset(2, 10);
    cfg.context_length = 20;  // samples are length 10
    CHECK_THROWS_AS(train(data, cfg), InvalidInputError);

    cfg.context_length = 10;
    cfg.learning_rate = 0.0;
    CHECK_THROWS_AS(train(data, cfg), InvalidInputError);
}

TEST_CASE("build_dataset pairs trajectories and reports misalignment") {
    ScenarioConfig sc;
    sc.n_trajectories = 4;
    sc.min_length = 25;
    sc.max_length = 30;
    sc.seed = 31;
    const auto [gts, noisies] = generate_scenario(sc, NoiseModel{});
    const auto data = build_dataset(noisies, gts, 20, 1);
    CHECK(!data.empty());
    for (const auto& s : data) {
        CHECK(s.input_segment.size() == 20);
        CHECK(s.target.size() == 20);
        for (const auto& item : s.input_segment.items) {
            CHECK((item.valid || item.substituted));
        }
    }

    auto broken = gts;
    broken.pop_back();
    CHECK_THROWS_WITH_AS(build_dataset(noisies, broken, 20, 1),
                         doctest::Contains("car_0003"), InvalidInputError);

    auto renamed = gts;
    renamed[0].vehicle_id = "other";
    CHECK_THROWS_AS(build_dataset(noisies, renamed, 20, 1), InvalidInputError);
}
