#include "support.hpp"

#include "hzrd/error.hpp"
#include "hzrd/risk_model.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace hzrd;

namespace {

CovariateSequence random_sequence(std::size_t seq_len, std::size_t d, std::mt19937_64& rng) {
    std::normal_distribution<double> normal;
    RowMatrix x(seq_len, d);
    for (Eigen::Index k = 0; k < x.size(); ++k) x.data()[k] = normal(rng);
    return CovariateSequence(x);
}

double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

// Plain-loop LSTM over one sequence, gate rows ordered input, forget,
// candidate, output; reads the flat parameter layout W, U, b, w, c.
double lstm_oracle(const Eigen::VectorXd& p, const RowMatrix& x, std::size_t h) {
    const std::size_t d = std::size_t(x.cols());
    const std::size_t g4 = 4 * h;
    auto W = [&](std::size_t r, std::size_t c) { return p[Eigen::Index(c * g4 + r)]; };
    auto U = [&](std::size_t r, std::size_t c) { return p[Eigen::Index(g4 * d + c * g4 + r)]; };
    auto b = [&](std::size_t r) { return p[Eigen::Index(g4 * d + g4 * h + r)]; };
    std::vector<double> hs(h, 0.0), cs(h, 0.0);
    for (Eigen::Index t = 0; t < x.rows(); ++t) {
        std::vector<double> pre(g4);
        for (std::size_t r = 0; r < g4; ++r) {
            double s = b(r);
            for (std::size_t c = 0; c < d; ++c) s += W(r, c) * x(t, Eigen::Index(c));
            for (std::size_t c = 0; c < h; ++c) s += U(r, c) * hs[c];
            pre[r] = s;
        }
        for (std::size_t u = 0; u < h; ++u) {
            const double i = sigmoid(pre[u]);
            const double f = sigmoid(pre[h + u]);
            const double g = std::tanh(pre[2 * h + u]);
            const double o = sigmoid(pre[3 * h + u]);
            cs[u] = f * cs[u] + i * g;
            hs[u] = o * std::tanh(cs[u]);
        }
    }
    double psi = p[p.size() - 1];
    for (std::size_t u = 0; u < h; ++u) psi += p[Eigen::Index(g4 * d + g4 * h + g4 + u)] * hs[u];
    return psi;
}

// max_i |a_i - b_i| / max(|a_i|, |b_i|, floor)
double max_rel_err(const Eigen::VectorXd& a, const Eigen::VectorXd& b, double floor = 1e-6) {
    double worst = 0.0;
    for (Eigen::Index i = 0; i < a.size(); ++i)
        worst = std::max(worst, std::abs(a[i] - b[i]) / std::max({std::abs(a[i]), std::abs(b[i]), floor}));
    return worst;
}

// Central differences of psi with respect to the parameters, dropout off.
Eigen::VectorXd fd_parameters(RiskModel model, const CovariateSequence& seq, double h = 1e-5) {
    Eigen::VectorXd p = model.parameters();
    Eigen::VectorXd g(p.size());
    for (Eigen::Index k = 0; k < p.size(); ++k) {
        const double keep = p[k];
        p[k] = keep + h;
        model.set_parameters(p);
        const double up = risk_forward(model, seq);
        p[k] = keep - h;
        model.set_parameters(p);
        const double dn = risk_forward(model, seq);
        p[k] = keep;
        g[k] = (up - dn) / (2 * h);
    }
    return g;
}

}  // namespace

TEST_CASE("linear forward fixtures") {
    LinearRiskModel zero(2, 3);
    std::mt19937_64 rng(1);
    const auto seq = random_sequence(3, 2, rng);
    CHECK(risk_forward(RiskModel(zero), seq) == 0.0);

    LinearRiskModel two(3, 1);
    two.parameters() << 2.0, 0.0, 0.0;
    RowMatrix x(1, 3);
    x << 1.0, 0.0, 0.0;
    CHECK(risk_forward(RiskModel(two), CovariateSequence(x)) == 2.0);
}

TEST_CASE("linear model equals an independent dot product") {
    std::mt19937_64 rng(2);
    std::normal_distribution<double> normal;
    double worst = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        LinearRiskModel m(4, 3);
        for (Eigen::Index k = 0; k < 12; ++k) m.parameters()[k] = normal(rng);
        const auto seq = random_sequence(3, 4, rng);
        double dot = 0.0;
        for (Eigen::Index k = 0; k < 3; ++k)
            for (Eigen::Index j = 0; j < 4; ++j) dot += m.parameters()[k * 4 + j] * seq.values()(k, j);
        worst = std::max(worst, std::abs(risk_forward(RiskModel(m), seq) - dot));
    }
    CHECK(worst < 1e-12);
}

TEST_CASE("single affine MLP layer") {
    MlpRiskModel m(2, 1, {}, 0.0);
    m.weight(0).setOnes();
    m.bias(0).setZero();
    RowMatrix x(1, 2);
    x << 0.5, 0.5;
    CHECK(risk_forward(RiskModel(m), CovariateSequence(x)) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("MLP forward matches a hand-evaluated ReLU network") {
    MlpRiskModel m(2, 1, {2}, 0.0);
    m.weight(0) << 1.0, -1.0, 0.5, 2.0;
    m.bias(0) << 0.1, -3.0;
    m.weight(1) << 2.0, 5.0;
    m.bias(1) << 0.25;
    RowMatrix x(1, 2);
    x << 1.0, 0.5;
    // hidden = relu([1 - 0.5 + 0.1, 0.5 + 1 - 3]) = [0.6, 0]; psi = 1.2 + 0.25
    CHECK(risk_forward(RiskModel(m), CovariateSequence(x)) == doctest::Approx(1.45).epsilon(1e-14));
}

TEST_CASE("LSTM forward matches a plain-loop cell") {
    std::mt19937_64 rng(4);
    for (std::size_t h : {1u, 3u}) {
        for (int trial = 0; trial < 10; ++trial) {
            Rng init(std::uint64_t(trial) + 100);
            const auto m = LstmRiskModel::glorot(2, 3, h, 0.0, false, init);
            const auto seq = random_sequence(3, 2, rng);
            CHECK(risk_forward(RiskModel(m), seq) ==
                  doctest::Approx(lstm_oracle(m.parameters(), seq.values(), h)).epsilon(1e-13));
        }
    }
}

TEST_CASE("LSTM padding modes") {
    std::mt19937_64 rng(5);
    Rng init(9);
    auto m = LstmRiskModel::glorot(3, 3, 4, 0.0, false, init);
    RowMatrix padded = RowMatrix::Zero(3, 3);
    RowMatrix single(1, 3);
    single << 0.3, -1.2, 0.8;
    padded.row(2) = single.row(0);
    const CovariateSequence seq(padded, {false, false, true});
    const CovariateSequence short_seq(single);

    // With zero biases a zero input leaves the state at zero; give the gates
    // biases so padding is visible.
    m.gate_bias().setLinSpaced(-0.8, 0.9);
    const double plain = risk_forward(RiskModel(m), seq);
    const double unpadded = risk_forward(RiskModel(m), short_seq);
    CHECK(plain != unpadded);  // zeros are ordinary inputs by default

    m.set_skip_padding(true);
    CHECK(risk_forward(RiskModel(m), seq) == unpadded);
}

TEST_CASE("evaluation mode is deterministic") {
    Rng init(3);
    for (auto kind : {ModelKind::Linear, ModelKind::Mlp, ModelKind::Lstm}) {
        ModelSpec spec;
        spec.kind = kind;
        spec.mlp_hidden = {8};
        spec.lstm_hidden = 5;
        const RiskModel m = make_model(spec, 4, 3, 0.6, init);
        std::mt19937_64 rng(6);
        const auto seq = random_sequence(3, 4, rng);
        const double a = risk_forward(m, seq);
        const double b = risk_forward(m, seq);
        CHECK(std::bit_cast<std::uint64_t>(a) == std::bit_cast<std::uint64_t>(b));
    }
}

TEST_CASE("dimension mismatch is reported") {
    Rng init(1);
    for (auto kind : {ModelKind::Linear, ModelKind::Mlp, ModelKind::Lstm}) {
        ModelSpec spec;
        spec.kind = kind;
        const RiskModel m = make_model(spec, 4, 3, 0.0, init);
        std::mt19937_64 rng(1);
        CHECK_THROWS_AS(risk_forward(m, random_sequence(3, 5, rng)), DataError);
    }
}

TEST_CASE("non-finite intermediate values name the layer") {
    MlpRiskModel m(1, 1, {2}, 0.0);
    m.parameters().setConstant(1e300);
    RowMatrix x(1, 1);
    x << 1e300;
    try {
        risk_forward(RiskModel(m), CovariateSequence(x));
        FAIL("expected NumericError");
    } catch (const NumericError& e) {
        CHECK(std::string(e.what()).find("layer") != std::string::npos);
    }
}

TEST_CASE("initialisation scheme") {
    Rng init(12);
    const auto lstm = LstmRiskModel::glorot(6, 3, 5, 0.0, false, init);
    CHECK(lstm.gate_bias().segment(5, 5).isConstant(1.0));
    CHECK(lstm.gate_bias().head(5).isZero());
    CHECK(lstm.gate_bias().tail(10).isZero());
    // Per-gate blocks: fan_in d, fan_out h.
    const double a = std::sqrt(6.0 / (6 + 5));
    CHECK(lstm.input_weights().cwiseAbs().maxCoeff() <= a);
    CHECK(lstm.input_weights().cwiseAbs().maxCoeff() > 0.5 * a);

    const auto mlp = MlpRiskModel::glorot(10, 1, {7}, 0.0, init);
    CHECK(mlp.weight(0).cwiseAbs().maxCoeff() <= std::sqrt(6.0 / 17));
    CHECK(mlp.bias(0).isZero());
    CHECK(mlp.bias(1).isZero());
}

TEST_CASE("linear gradient is the flattened input") {
    std::mt19937_64 rng(7);
    Rng init(2);
    const RiskModel m(LinearRiskModel::glorot(3, 2, init));
    const auto seq = random_sequence(2, 3, rng);
    const auto g = risk_gradients(m, seq, 1.0);
    CHECK(g.parameters == Eigen::VectorXd(seq.flattened()));
    CHECK(risk_gradients(m, seq, 2.5).parameters.isApprox(2.5 * Eigen::VectorXd(seq.flattened())));
}

TEST_CASE("zero upstream gives zero gradients") {
    Rng init(2);
    std::mt19937_64 rng(8);
    for (auto kind : {ModelKind::Linear, ModelKind::Mlp, ModelKind::Lstm}) {
        ModelSpec spec;
        spec.kind = kind;
        spec.mlp_hidden = {5};
        spec.lstm_hidden = 3;
        const RiskModel m = make_model(spec, 2, 3, 0.0, init);
        const auto g = risk_gradients(m, random_sequence(3, 2, rng), 0.0);
        CHECK(g.parameters.isZero());
        CHECK(g.inputs.isZero());
    }
}

TEST_CASE("parameter and input gradients against central differences") {
    std::mt19937_64 rng(9);
    double worst_params = 0.0;
    double worst_inputs = 0.0;
    for (auto kind : {ModelKind::Linear, ModelKind::Mlp, ModelKind::Lstm}) {
        for (int trial = 0; trial < 5; ++trial) {
            ModelSpec spec;
            spec.kind = kind;
            spec.mlp_hidden = {4};
            spec.lstm_hidden = 3;
            Rng init{static_cast<std::uint64_t>(trial)};
            const RiskModel m = make_model(spec, 2, 3, 0.0, init);
            const auto seq = random_sequence(3, 2, rng);
            const auto g = risk_gradients(m, seq, 1.0);
            worst_params = std::max(worst_params, max_rel_err(g.parameters, fd_parameters(m, seq)));

            Eigen::VectorXd fd(6);
            for (Eigen::Index k = 0; k < 6; ++k) {
                RowMatrix up = seq.values();
                RowMatrix dn = seq.values();
                up.data()[k] += 1e-5;
                dn.data()[k] -= 1e-5;
                fd[k] = (risk_forward(m, CovariateSequence(up)) - risk_forward(m, CovariateSequence(dn))) / 2e-5;
            }
            worst_inputs =
                std::max(worst_inputs, max_rel_err(Eigen::Map<const Eigen::VectorXd>(g.inputs.data(), 6), fd));
        }
    }
    CHECK(worst_params < 1e-4);
    CHECK(worst_inputs < 1e-4);
}

TEST_CASE("training-mode gradients reuse the forward mask") {
    Rng init(4);
    ModelSpec spec;
    spec.kind = ModelKind::Mlp;
    spec.mlp_hidden = {6};
    RiskModel m = make_model(spec, 3, 1, 0.5, init);
    m.set_training(true);
    std::mt19937_64 rng(10);
    std::normal_distribution<double> normal;
    // Non-zero biases keep every pre-activation away from the ReLU kink.
    Eigen::VectorXd random_params(Eigen::Index(m.parameter_count()));
    for (auto& v : random_params) v = normal(rng);
    m.set_parameters(random_params);
    const auto seq = random_sequence(1, 3, rng);
    const FeatureBatch batch = FeatureBatch::from(seq);

    Rng mask_rng(77);
    DropoutMasks sample = DropoutMasks::sample(mask_rng);
    ForwardTrace trace;
    m.forward(batch, sample, &trace);
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(Eigen::Index(m.parameter_count()));
    m.backward(batch, trace, Eigen::VectorXd::Ones(1), grad);

    Eigen::VectorXd p = m.parameters();
    Eigen::VectorXd fd(p.size());
    for (Eigen::Index k = 0; k < p.size(); ++k) {
        RiskModel probe = m;
        const double keep = p[k];
        p[k] = keep + 1e-5;
        probe.set_parameters(p);
        DropoutMasks a = DropoutMasks::replay(trace.masks);
        const double up = probe.forward(batch, a)[0];
        p[k] = keep - 1e-5;
        probe.set_parameters(p);
        DropoutMasks b = DropoutMasks::replay(trace.masks);
        const double dn = probe.forward(batch, b)[0];
        p[k] = keep;
        fd[k] = (up - dn) / 2e-5;
    }
    CHECK(max_rel_err(grad, fd) < 1e-4);
}

TEST_CASE("dropout") {
    Rng rng(1);
    Eigen::VectorXd v = Eigen::VectorXd::LinSpaced(50, -2.0, 3.0);
    CHECK(apply_dropout(v, 0.0, rng) == v);
    CHECK_THROWS(apply_dropout(v, 1.0, rng));
    CHECK_THROWS(apply_dropout(v, -0.1, rng));

    Rng a(42);
    Rng b(42);
    CHECK(apply_dropout(v, 0.6, a) == apply_dropout(v, 0.6, b));

    Rng big(5);
    const Eigen::VectorXd ones = Eigen::VectorXd::Constant(100000, 2.0);
    const Eigen::VectorXd out = apply_dropout(ones, 0.6, big);
    const double zeroed = double((out.array() == 0.0).count()) / double(out.size());
    CHECK(zeroed == doctest::Approx(0.6).epsilon(0.01 / 0.6));
    const auto kept = out.array() != 0.0;
    CHECK(kept.select(out.array(), 0.0).sum() / double(kept.count()) == doctest::Approx(2.0 / 0.4));
    CHECK(out.mean() == doctest::Approx(2.0).epsilon(0.02));
}

TEST_CASE("model kind names") {
    CHECK(parse_model_kind("linear") == ModelKind::Linear);
    CHECK(parse_model_kind("mlp") == ModelKind::Mlp);
    CHECK(parse_model_kind("lstm") == ModelKind::Lstm);
    CHECK(to_string(ModelKind::Lstm) == "lstm");
    CHECK_THROWS(parse_model_kind("cnn"));
}
