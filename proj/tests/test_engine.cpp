#include "piggyback/engine.hpp"
#include "piggyback/errors.hpp"
#include "piggyback/model.hpp"
#include "piggyback/oracle.hpp"
#include "piggyback/random.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <stdexcept>

using namespace piggyback;

namespace {

/// Exposes only the dense per-sample interface, forcing the generic update.
struct DenseView {
    const Model* model;
    [[nodiscard]] Index dim() const { return model->dim(); }
    [[nodiscard]] Index param_dim() const { return model->param_dim(); }
    [[nodiscard]] Index num_samples() const { return model->num_samples(); }
    [[nodiscard]] SampleDerivatives evaluate_sample(const Vector& x, const Vector& t, Index xi) const
    {
        return model->evaluate_sample(x, t, xi);
    }
};

static_assert(RankOneProblem<Model>);
static_assert(ParametricProblem<DenseView> && !RankOneProblem<DenseView>);

Vector gaussian(Index n, std::uint64_t seed)
{
    SplitMix64 rng(seed);
    Vector v(n);
    for (Index i = 0; i < n; ++i) {
        v[i] = rng.normal();
    }
    return v;
}

Model preset_model(ModelKind kind, std::uint64_t seed = 0)
{
    ModelSpec spec;
    spec.kind = kind;
    spec.seed = seed;
    return Model::generate(spec);
}

JointState scalar_state(double x, double D)
{
    return {0, Vector::Constant(1, x), Matrix::Constant(1, 1, D)};
}

} // namespace

TEST(JointStep, ScalarLeastSquaresExample)
{
    const Model model(ModelKind::OlsStandard, Matrix::Constant(1, 1, 1.0));
    const auto next = joint_step(model, scalar_state(2.0, 0.0), Vector::Constant(1, 1.0), 0.5, 0);
    EXPECT_EQ(next.k, 1U);
    EXPECT_DOUBLE_EQ(next.x[0], 1.5);
    EXPECT_DOUBLE_EQ(next.D(0, 0), 0.5);
    const auto dense = joint_step(DenseView{&model}, scalar_state(2.0, 0.0), Vector::Constant(1, 1.0), 0.5, 0);
    EXPECT_DOUBLE_EQ(dense.x[0], 1.5);
    EXPECT_DOUBLE_EQ(dense.D(0, 0), 0.5);
}

TEST(JointStep, SolutionIsAFixedPoint)
{
    // ridge, a = 1, λ = 0.05, θ = 1: x* = D* = 1/1.1
    const Model model(ModelKind::Ridge, Matrix::Constant(1, 1, 1.0), 0.05);
    const auto next = joint_step(model, scalar_state(1.0 / 1.1, 1.0 / 1.1), Vector::Constant(1, 1.0), 0.3, 0);
    EXPECT_NEAR(next.x[0], 1.0 / 1.1, 1e-15);
    EXPECT_NEAR(next.D(0, 0), 1.0 / 1.1, 1e-15);
}

TEST(JointStep, ZeroStepOnlyAdvancesCounter)
{
    const Model model = preset_model(ModelKind::Logistic);
    const Vector theta = gaussian(model.param_dim(), 1);
    JointState s{4, gaussian(model.dim(), 2), Matrix::Random(model.dim(), model.param_dim())};
    const auto next = joint_step(model, s, theta, 0.0, 3);
    EXPECT_EQ(next.k, 5U);
    EXPECT_TRUE(next.x == s.x);
    EXPECT_TRUE(next.D == s.D);
}

TEST(JointStep, RejectsBadInputs)
{
    const Model model(ModelKind::OlsStandard, Matrix::Constant(1, 1, 1.0));
    const Vector theta = Vector::Constant(1, 1.0);
    EXPECT_THROW((void)joint_step(model, scalar_state(2.0, 0.0), theta, -0.1, 0), ConfigError);
    EXPECT_THROW((void)joint_step(model, scalar_state(2.0, 0.0), theta, 0.1, 1), std::out_of_range);
    EXPECT_THROW((void)joint_step(model, scalar_state(2.0, 0.0), Vector::Zero(2), 0.1, 0), ShapeError);
    try {
        JointState s = scalar_state(1e300, 0.0);
        s.k = 41;
        (void)joint_step(model, s, theta, 1e300, 0);
        FAIL() << "expected overflow";
    } catch (const OverflowError& e) {
        EXPECT_EQ(e.iteration(), 42U);
    }
}

TEST(JointStep, FastPathMatchesDenseUpdate)
{
    for (auto kind : {ModelKind::OlsStandard, ModelKind::OlsSimpleInterp, ModelKind::OlsDoubleInterp,
             ModelKind::Ridge, ModelKind::Logistic, ModelKind::Huber, ModelKind::Hinge}) {
        const Model model = preset_model(kind, 4);
        const Vector theta = gaussian(model.param_dim(), 5);
        const auto schedule = StepSchedule::constant(0.05);
        SampleStream s1(9, static_cast<std::uint64_t>(model.num_samples()));
        SampleStream s2 = s1.fork();
        const Vector x0 = gaussian(model.dim(), 6) * 0.1;
        const auto fast = run(model, theta, x0, schedule, s1, 500, 50);
        const auto dense = run(DenseView{&model}, theta, x0, schedule, s2, 500, 50);
        ASSERT_EQ(fast.states.size(), dense.states.size());
        for (std::size_t i = 0; i < fast.states.size(); ++i) {
            EXPECT_LE((fast.states[i].x - dense.states[i].x).cwiseAbs().maxCoeff(), 1e-12) << to_string(kind);
            EXPECT_LE((fast.states[i].D - dense.states[i].D).cwiseAbs().maxCoeff(), 1e-12) << to_string(kind);
        }
    }
}

TEST(Run, SingleStepGivesTwoSnapshots)
{
    const Model model = preset_model(ModelKind::Ridge);
    const Vector theta = gaussian(model.param_dim(), 1);
    SampleStream stream(3, 100);
    const auto traj = run(model, theta, Vector::Zero(10), StepSchedule::constant(0.1), stream, 1, 1);
    ASSERT_EQ(traj.states.size(), 2U);
    EXPECT_EQ(traj.states[0].k, 0U);
    EXPECT_EQ(traj.states[1].k, 1U);
    EXPECT_TRUE(traj.states[0].D.isZero(0.0));
    EXPECT_EQ(traj.seed, 3U);
    EXPECT_EQ(traj.stream_offset, 0U);
}

TEST(Run, SnapshotsAtStrideAndFinalStep)
{
    const Model model = preset_model(ModelKind::Ridge);
    const Vector theta = gaussian(model.param_dim(), 1);
    SampleStream stream(3, 100);
    const auto traj = run(model, theta, Vector::Zero(10), StepSchedule::constant(0.1), stream, 10, 4);
    std::vector<std::size_t> ks;
    for (const auto& s : traj.states) {
        ks.push_back(s.k);
    }
    EXPECT_EQ(ks, (std::vector<std::size_t>{0, 4, 8, 10}));
}

TEST(Run, RejectsInvalidArguments)
{
    const Model model = preset_model(ModelKind::Ridge);
    const Vector theta = gaussian(model.param_dim(), 1);
    SampleStream stream(3, 100);
    const auto sched = StepSchedule::constant(0.1);
    EXPECT_THROW((void)run(model, theta, Vector::Zero(10), sched, stream, 0, 1), ConfigError);
    EXPECT_THROW((void)run(model, theta, Vector::Zero(10), sched, stream, 5, 0), ConfigError);
    SampleStream wrong(3, 50);
    EXPECT_THROW((void)run(model, theta, Vector::Zero(10), sched, wrong, 5, 1), ShapeError);
    EXPECT_THROW((void)run(model, theta, Vector::Zero(10), Matrix::Zero(10, 3), sched, stream, 5, 1), ShapeError);
}

TEST(Run, DivergenceRaisesOverflow)
{
    const Model model = preset_model(ModelKind::Ridge);
    const Vector theta = gaussian(model.param_dim(), 1);
    SampleStream stream(3, 100);
    EXPECT_THROW((void)run(model, theta, Vector::Zero(10), StepSchedule::constant(1e6), stream, 2000, 100),
        OverflowError);
}

TEST(Run, IdenticalSeedsGiveBitwiseIdenticalTrajectories)
{
    const Model model = preset_model(ModelKind::Logistic);
    const Vector theta = gaussian(model.param_dim(), 1);
    SampleStream a(11, 100);
    SampleStream b(11, 100);
    const auto sched = StepSchedule::constant(0.1);
    const auto ta = run(model, theta, Vector::Zero(10), sched, a, 1000, 10);
    const auto tb = run(model, theta, Vector::Zero(10), sched, b, 1000, 10);
    ASSERT_EQ(ta.states.size(), tb.states.size());
    for (std::size_t i = 0; i < ta.states.size(); ++i) {
        EXPECT_TRUE(ta.states[i].x == tb.states[i].x);
        EXPECT_TRUE(ta.states[i].D == tb.states[i].D);
    }
}

TEST(StepSchedule, TheoremDecayInitialStep)
{
    const auto s = StepSchedule::theorem_decay(1.0, 2.0);
    EXPECT_DOUBLE_EQ(s(0), 0.0625);
    EXPECT_DOUBLE_EQ(s(32), 2.0 / 64.0);
    for (std::size_t k = 0; k < 1000; ++k) {
        ASSERT_GT(s(k), 0.0);
        ASSERT_LE(s(k + 1), s(k));
    }
    // η₀ coincides with μ/(4L²)
    EXPECT_DOUBLE_EQ(s(0), 1.0 / (4.0 * 4.0));
}

TEST(StepSchedule, InverseKAndConstant)
{
    const auto ik = StepSchedule::inverse_k(3.0, 2.0);
    EXPECT_DOUBLE_EQ(ik(0), 1.5);
    EXPECT_DOUBLE_EQ(ik(4), 0.5);
    EXPECT_DOUBLE_EQ(StepSchedule::constant(0.2)(123), 0.2);
    EXPECT_TRUE(StepSchedule::constant(0.2).is_constant());
    EXPECT_FALSE(ik.is_constant());
    EXPECT_NE(ik.id(), StepSchedule::constant(0.2).id());
}

TEST(StepSchedule, InvalidParametersAreRejected)
{
    EXPECT_THROW((void)StepSchedule::constant(0.0), ConfigError);
    EXPECT_THROW((void)StepSchedule::constant(std::nan("")), ConfigError);
    EXPECT_THROW((void)StepSchedule::inverse_k(-1.0, 1.0), ConfigError);
    EXPECT_THROW((void)StepSchedule::theorem_decay(2.0, 1.0), ConfigError);
}

TEST(StepSchedule, DecayAdmissibilityChecks)
{
    // μ = 1, L = 2: η ≤ 1/16, c ≥ 2, u ≥ 32
    EXPECT_NO_THROW(StepSchedule::constant(1.0 / 16.0).validate_for_theorem(1.0, 2.0));
    EXPECT_THROW(StepSchedule::constant(0.07).validate_for_theorem(1.0, 2.0), ConfigError);
    EXPECT_NO_THROW(StepSchedule::inverse_k(2.0, 32.0).validate_for_theorem(1.0, 2.0));
    EXPECT_THROW(StepSchedule::inverse_k(1.9, 32.0).validate_for_theorem(1.0, 2.0), ConfigError);
    EXPECT_THROW(StepSchedule::inverse_k(2.0, 31.0).validate_for_theorem(1.0, 2.0), ConfigError);
    EXPECT_NO_THROW(StepSchedule::theorem_decay(1.0, 2.0).validate_for_theorem(1.0, 2.0));
}

TEST(PathFiniteDifferences, ExactForLeastSquares)
{
    for (auto kind : {ModelKind::OlsStandard, ModelKind::OlsSimpleInterp, ModelKind::OlsDoubleInterp}) {
        const Model model = preset_model(kind, 2);
        const Vector theta = gaussian(model.param_dim(), 3);
        const auto sched = StepSchedule::constant(0.04);
        SampleStream stream(8, 100);
        const Vector x0 = Vector::Zero(model.dim());
        const auto traj = run(model, theta, x0, sched, stream, 1000, 1000);
        const Matrix fd = jacobian_by_path_fd(model, theta, x0, sched, 8, 1000, 1e-3);
        const Matrix& D = traj.states.back().D;
        EXPECT_LE((fd - D).norm() / D.norm(), 1e-9) << to_string(kind);
    }
}

TEST(PathFiniteDifferences, LogisticSecondOrderAccuracy)
{
    const Model model = preset_model(ModelKind::Logistic, 2);
    const Vector theta = gaussian(model.param_dim(), 3);
    const auto oracle = solve(model, theta);
    const auto sched = StepSchedule::constant(oracle.mu() / (4.0 * oracle.L() * oracle.L()));
    SampleStream stream(8, 100);
    const Vector x0 = Vector::Zero(model.dim());
    const auto traj = run(model, theta, x0, sched, stream, 1000, 1000);
    const Matrix& D = traj.states.back().D;
    const double e_small = (jacobian_by_path_fd(model, theta, x0, sched, 8, 1000, 1e-5) - D).norm() / D.norm();
    EXPECT_LE(e_small, 1e-4);
    // truncation error dominates at these h: halving h divides it by ~4
    const double e1 = (jacobian_by_path_fd(model, theta, x0, sched, 8, 1000, 0.2) - D).norm() / D.norm();
    const double e2 = (jacobian_by_path_fd(model, theta, x0, sched, 8, 1000, 0.1) - D).norm() / D.norm();
    EXPECT_GT(e1 / e2, 3.5);
    EXPECT_LT(e1 / e2, 4.5);
}

TEST(PathFiniteDifferences, RejectsNonPositiveStep)
{
    const Model model = preset_model(ModelKind::Ridge);
    EXPECT_THROW((void)jacobian_by_path_fd(model, Vector::Zero(100), Vector::Zero(10),
                     StepSchedule::constant(0.1), 1, 10, 0.0),
        ConfigError);
}

TEST(DerivativeBound, Formula)
{
    EXPECT_DOUBLE_EQ(derivative_norm_bound(0.0, 1.0, 4), 2.0 * 2.0 * 4.0);
    EXPECT_DOUBLE_EQ(derivative_norm_bound(100.0, 1.0, 4), 100.0);
}

TEST(DerivativeBound, HoldsAlongRidgeAndLogisticRuns)
{
    for (auto kind : {ModelKind::Ridge, ModelKind::Logistic}) {
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            const Model model = preset_model(kind, seed);
            const Vector theta = gaussian(model.param_dim(), seed + 100);
            const auto oracle = solve(model, theta);
            const double bound = derivative_norm_bound(0.0, oracle.kappa(), model.param_dim());
            const auto sched = StepSchedule::constant(oracle.mu() / (oracle.L() * oracle.L()));
            SampleStream stream(seed, 100);
            double worst = 0.0;
            run_observed(model, theta, Vector::Zero(10), Matrix::Zero(10, 100), sched, stream, 10000, 1,
                [&](const JointState& s) { worst = std::max(worst, s.D.norm()); });
            EXPECT_LE(worst, bound) << to_string(kind) << " seed " << seed;
        }
    }
}
