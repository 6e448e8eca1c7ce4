#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "foil/env_inference.hpp"
#include "foil/evaluation.hpp"
#include "oracles.hpp"

using namespace foil;
using namespace foil::envinf;

namespace {

EnvironmentAssignment make_assignment(std::vector<int> labels, int k) {
    EnvironmentAssignment a;
    a.labels = std::move(labels);
    a.k = k;
    a.validate();
    return a;
}

nn::MlpNetwork linear_net(Index in, Index out, Rng& rng) {
    return nn::MlpNetwork::make(in, {}, out, nn::Activation::kIdentity,
                                nn::Activation::kIdentity, rng);
}

// Per-environment linear targets over shared representations: environment e
// maps reps through its own matrix, with block-structured environment runs.
struct SyntheticEm {
    Matrix reps;
    Matrix targets;
    std::vector<int> true_env;
};

SyntheticEm make_synthetic_em(Index n, Index d, Index h, Index block, double noise,
                              std::uint64_t seed) {
    Rng rng(seed);
    SyntheticEm s;
    s.reps = Matrix(n, d);
    s.targets = Matrix(n, h);
    s.true_env.resize(static_cast<std::size_t>(n));
    Matrix w0(h, d);
    for (Index r = 0; r < h; ++r)
        for (Index c = 0; c < d; ++c) w0(r, c) = rng.normal();
    const Matrix w1 = -w0;
    for (Index i = 0; i < n; ++i) {
        const int env = static_cast<int>((i / block) % 2);
        s.true_env[static_cast<std::size_t>(i)] = env;
        for (Index c = 0; c < d; ++c) s.reps(i, c) = rng.normal();
        Vector y = (env == 0 ? w0 : w1) * s.reps.row(i).transpose();
        for (Index r = 0; r < h; ++r) y(r) += noise * rng.normal();
        s.targets.row(i) = y.transpose();
    }
    return s;
}

}  // namespace

TEST_CASE("label_propagate: radius zero and uniform labels are identities") {
    const auto a = make_assignment({0, 1, 0, 1, 1}, 2);
    CHECK(label_propagate(a, 0).labels == a.labels);
    const auto uniform = make_assignment(std::vector<int>(10, 1), 2);
    CHECK(label_propagate(uniform, 3).labels == uniform.labels);
}

TEST_CASE("label_propagate: isolated label is outvoted") {
    const auto a = make_assignment({0, 0, 1, 0, 0}, 2);
    CHECK(label_propagate(a, 1).labels == std::vector<int>{0, 0, 0, 0, 0});
}

TEST_CASE("label_propagate: alternating sequence matches the brute-force oracle") {
    const auto a = make_assignment({0, 1, 0, 1, 0}, 2);
    const auto got = label_propagate(a, 1).labels;
    const auto want = oracles::brute_force_propagate(a.labels, 2, 1);
    CHECK(got == want);
    // Window contents, worked by hand: interior majorities give {0,0,1,0,0};
    // both boundary windows tie and keep their own label.
    CHECK(got == std::vector<int>{0, 0, 1, 0, 0});
}

TEST_CASE("label_propagate: agrees with the oracle on random sequences") {
    Rng rng(99);
    for (int rep = 0; rep < 500; ++rep) {
        const int k = 2 + static_cast<int>(rng.uniform_int(3));
        const int radius = static_cast<int>(rng.uniform_int(4));
        const auto n = 5 + rng.uniform_int(60);
        std::vector<int> labels(n);
        for (auto& l : labels) l = static_cast<int>(rng.uniform_int(k));
        const auto got = label_propagate(make_assignment(labels, k), radius).labels;
        CHECK(got == oracles::brute_force_propagate(labels, k, radius));
    }
}

TEST_CASE("label_propagate: preserves the label alphabet and is idempotent on long runs") {
    Rng rng(17);
    std::vector<int> labels;
    for (int block = 0; block < 6; ++block) {
        const int env = static_cast<int>(rng.uniform_int(3));
        for (int i = 0; i < 12; ++i) labels.push_back(env);
    }
    const int radius = 2;  // runs are longer than 2r+1
    const auto once = label_propagate(make_assignment(labels, 3), radius);
    const auto twice = label_propagate(once, radius);
    CHECK(once.labels == twice.labels);
    for (int l : once.labels) CHECK(l < 3);
}

TEST_CASE("e_step: identical heads tie everywhere, labels stay put") {
    Rng rng(1);
    const auto net = linear_net(3, 2, rng);
    auto heads = MultiHeadRegressors::from_template(net, 2);
    Matrix reps(6, 3), targets(6, 2);
    for (Index i = 0; i < 6; ++i) {
        for (Index c = 0; c < 3; ++c) reps(i, c) = rng.normal();
        for (Index c = 0; c < 2; ++c) targets(i, c) = rng.normal();
    }
    const auto current = make_assignment({0, 1, 1, 0, 1, 0}, 2);
    const auto next = e_step_assign(heads, reps, targets, current, losses::SampleLoss::kSuf);
    CHECK(next.labels == current.labels);
}

TEST_CASE("e_step: zero-loss head wins its sample") {
    Rng rng(2);
    auto heads = MultiHeadRegressors::from_template(linear_net(2, 3, rng), 2);
    // Head 0 reproduces target A from rep A; head 1 reproduces target B.
    Matrix reps(2, 2);
    reps << 1.0, 0.0, 0.0, 1.0;
    Matrix w0(3, 2), w1(3, 2);
    w0 << 1, 0, 2, 0, 3, 0;
    w1 << 0, -1, 0, 5, 0, 2;
    heads.heads[0].layers[0].weight = w0;
    heads.heads[0].layers[0].bias.setZero();
    heads.heads[1].layers[0].weight = w1;
    heads.heads[1].layers[0].bias.setZero();
    Matrix targets(2, 3);
    targets << 1, 2, 3, -1, 5, 2;
    const auto current = make_assignment({1, 0}, 2);
    const auto next = e_step_assign(heads, reps, targets, current, losses::SampleLoss::kSuf);
    CHECK(next.labels == std::vector<int>{0, 1});
}

TEST_CASE("e_step: argmin reassignment never increases the summed loss") {
    Rng rng(3);
    auto heads = MultiHeadRegressors::from_template(linear_net(4, 3, rng), 3);
    // Make the heads differ.
    for (int e = 0; e < 3; ++e) {
        for (auto& layer : heads.heads[static_cast<std::size_t>(e)].layers) {
            layer.weight.array() += 0.3 * static_cast<double>(e);
        }
    }
    Matrix reps(40, 4), targets(40, 3);
    std::vector<int> labels(40);
    for (Index i = 0; i < 40; ++i) {
        for (Index c = 0; c < 4; ++c) reps(i, c) = rng.normal();
        for (Index c = 0; c < 3; ++c) targets(i, c) = rng.normal();
        labels[static_cast<std::size_t>(i)] = static_cast<int>(rng.uniform_int(3));
    }
    const auto current = make_assignment(labels, 3);
    const Matrix losses_nk = head_loss_matrix(heads, reps, targets, losses::SampleLoss::kSuf);
    double before = 0.0, after = 0.0;
    const auto next = e_step_assign(heads, reps, targets, current, losses::SampleLoss::kSuf);
    for (Index i = 0; i < 40; ++i) {
        before += losses_nk(i, current.labels[static_cast<std::size_t>(i)]);
        after += losses_nk(i, next.labels[static_cast<std::size_t>(i)]);
    }
    CHECK(after <= before);
}

TEST_CASE("m_step: K=1 equals fitting one regressor on everything") {
    Rng rng(4);
    const auto synth = make_synthetic_em(80, 3, 4, 80, 0.0, 11);  // single env block
    auto heads = MultiHeadRegressors::from_template(linear_net(3, 4, rng), 1);
    auto single = heads.heads[0];

    const auto assignment = make_assignment(std::vector<int>(80, 0), 1);
    const nn::SgdConfig opt{0.05, 0.9};
    const auto result =
        m_step(heads, synth.reps, synth.targets, assignment, 40, opt, losses::SampleLoss::kSuf);

    // Reference: identical loop over the lone head.
    nn::SgdOptimizer optimizer{opt};
    Vector dy;
    const double inv_n = 1.0 / 80.0;
    for (int epoch = 0; epoch < 40; ++epoch) {
        nn::ActivationCache cache;
        const Matrix preds = nn::forward(single, synth.reps, &cache);
        Matrix grad(preds.rows(), preds.cols());
        for (Index b = 0; b < preds.rows(); ++b) {
            losses::suf_loss_grad(preds.row(b).transpose(), synth.targets.row(b).transpose(), dy);
            grad.row(b) = inv_n * dy.transpose();
        }
        optimizer.step(single, nn::backward(single, cache, grad));
    }
    CHECK(heads.heads[0].layers[0].weight == single.layers[0].weight);
    CHECK(result.risks.size() == 1);
    CHECK(!result.skipped[0]);
}

TEST_CASE("m_step: per-environment exact fits drive in-env risk to zero") {
    Rng rng(5);
    const auto synth = make_synthetic_em(400, 4, 6, 100, 0.0, 21);
    auto heads = MultiHeadRegressors::from_template(linear_net(4, 6, rng), 2);
    EnvironmentAssignment truth_assignment = make_assignment(synth.true_env, 2);
    const auto result = m_step(heads, synth.reps, synth.targets, truth_assignment, 400,
                               {0.2, 0.9}, losses::SampleLoss::kSuf);
    REQUIRE(result.risks.size() == 2);
    CHECK(result.risks[0] < 1e-4);
    CHECK(result.risks[1] < 1e-4);
}

TEST_CASE("m_step: empty environment is skipped and flagged") {
    Rng rng(6);
    const auto synth = make_synthetic_em(50, 3, 4, 50, 0.1, 31);
    auto heads = MultiHeadRegressors::from_template(linear_net(3, 4, rng), 3);
    const auto before = heads.heads[2].layers[0].weight;
    const auto assignment = make_assignment(std::vector<int>(50, 1), 3);
    const auto result =
        m_step(heads, synth.reps, synth.targets, assignment, 10, {0.05, 0.9},
               losses::SampleLoss::kSuf);
    CHECK(result.skipped[0]);
    CHECK(!result.skipped[1]);
    CHECK(result.skipped[2]);
    CHECK(heads.heads[2].layers[0].weight == before);  // untouched
    CHECK(std::isnan(result.risks[2]));
}

TEST_CASE("m_step: small-lr training does not increase the total objective") {
    Rng rng(7);
    const auto synth = make_synthetic_em(200, 4, 6, 100, 0.05, 41);
    auto heads = MultiHeadRegressors::from_template(linear_net(4, 6, rng), 2);
    const auto assignment = make_assignment(synth.true_env, 2);

    auto total_objective = [&]() {
        const Matrix l = head_loss_matrix(heads, synth.reps, synth.targets,
                                          losses::SampleLoss::kSuf);
        double per_env[2] = {0.0, 0.0};
        int counts[2] = {0, 0};
        for (Index i = 0; i < 200; ++i) {
            const int e = assignment.labels[static_cast<std::size_t>(i)];
            per_env[e] += l(i, e);
            ++counts[e];
        }
        return 0.5 * (per_env[0] / counts[0] + per_env[1] / counts[1]);
    };
    const double before = total_objective();
    m_step(heads, synth.reps, synth.targets, assignment, 200, {1e-3, 0.0},
           losses::SampleLoss::kSuf);
    CHECK(total_objective() <= before);
}

TEST_CASE("em_infer: delta = 1 stops after a single iteration") {
    Rng rng(8);
    const auto synth = make_synthetic_em(100, 3, 4, 25, 0.1, 51);
    auto heads = MultiHeadRegressors::from_template(linear_net(3, 4, rng), 2);
    EmConfig cfg;
    cfg.delta = 1.0;
    cfg.epochs_m = 5;
    auto initial = EnvironmentAssignment::random(100, 2, rng);
    const auto result = em_infer(heads, synth.reps, synth.targets, initial, cfg);
    CHECK(result.trace.size() == 1);
    CHECK(result.converged);
}

TEST_CASE("em_infer: recovers block environments on separable representations") {
    Rng rng(9);
    const auto synth = make_synthetic_em(600, 4, 6, 100, 0.05, 61);
    auto heads = MultiHeadRegressors::from_template(linear_net(4, 6, rng), 2);
    EmConfig cfg;
    cfg.radius = 2;
    cfg.epochs_m = 60;
    cfg.opt = {0.1, 0.9};
    auto initial = EnvironmentAssignment::random(600, 2, rng);
    const auto result = em_infer(heads, synth.reps, synth.targets, initial, cfg);
    const double acc = metrics::env_recovery_score(result.assignment.labels, synth.true_env, 2);
    CHECK(acc >= 0.8);

    // The Eq. 7 optimality bookkeeping holds on every recorded iteration.
    for (const auto& it : result.trace) {
        CHECK(it.assign_loss_after <= it.assign_loss_before);
    }
}

TEST_CASE("em_infer: propagation radius does not reduce label contiguity") {
    Rng base_rng(10);
    const auto synth = make_synthetic_em(600, 4, 6, 100, 0.3, 71);
    double run_len[2];
    int slot = 0;
    for (int radius : {0, 2}) {
        Rng rng(12);
        auto heads = MultiHeadRegressors::from_template(linear_net(4, 6, rng), 2);
        EmConfig cfg;
        cfg.radius = radius;
        cfg.epochs_m = 40;
        cfg.opt = {0.1, 0.9};
        auto initial = EnvironmentAssignment::random(600, 2, rng);
        const auto result = em_infer(heads, synth.reps, synth.targets, initial, cfg);
        run_len[slot++] = mean_run_length(result.assignment.labels);
    }
    CHECK(run_len[0] <= run_len[1]);  // r=0 contiguity <= r=2 contiguity
}

TEST_CASE("em_infer: permutation symmetry at K=2") {
    Rng rng(11);
    const auto synth = make_synthetic_em(300, 4, 5, 75, 0.05, 81);
    EmConfig cfg;
    cfg.epochs_m = 30;
    cfg.opt = {0.1, 0.9};

    Rng assign_rng(5);
    auto initial = EnvironmentAssignment::random(300, 2, assign_rng);
    auto swapped = initial;
    for (auto& l : swapped.labels) l = 1 - l;

    const auto tmpl = linear_net(4, 5, rng);
    auto heads_a = MultiHeadRegressors::from_template(tmpl, 2);
    auto heads_b = MultiHeadRegressors::from_template(tmpl, 2);
    const auto ra = em_infer(heads_a, synth.reps, synth.targets, initial, cfg);
    const auto rb = em_infer(heads_b, synth.reps, synth.targets, swapped, cfg);

    REQUIRE(ra.assignment.labels.size() == rb.assignment.labels.size());
    for (std::size_t i = 0; i < ra.assignment.labels.size(); ++i) {
        CHECK(ra.assignment.labels[i] == 1 - rb.assignment.labels[i]);
    }
    REQUIRE(ra.trace.size() == rb.trace.size());
    for (std::size_t i = 0; i < ra.trace.size(); ++i) {
        CHECK(ra.trace[i].changed_fraction == rb.trace[i].changed_fraction);
        CHECK(ra.trace[i].head_risks[0] == rb.trace[i].head_risks[1]);
        CHECK(ra.trace[i].head_risks[1] == rb.trace[i].head_risks[0]);
    }
    // Head parameters swap exactly.
    CHECK(heads_a.heads[0].layers[0].weight == heads_b.heads[1].layers[0].weight);
    CHECK(heads_a.heads[1].layers[0].weight == heads_b.heads[0].layers[0].weight);
}

TEST_CASE("mean_run_length: counts maximal constant runs") {
    CHECK(mean_run_length({0, 0, 0, 0}) == doctest::Approx(4.0));
    CHECK(mean_run_length({0, 1, 0, 1}) == doctest::Approx(1.0));
    CHECK(mean_run_length({0, 0, 1, 1, 1, 0}) == doctest::Approx(2.0));
}

TEST_CASE("assignment validation rejects out-of-range labels") {
    EnvironmentAssignment a;
    a.k = 2;
    a.labels = {0, 1, 2};
    CHECK_THROWS_AS(a.validate(), ConfigError);
}
