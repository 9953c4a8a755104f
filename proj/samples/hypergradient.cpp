// Ridge regression: run SGD with its parameter Jacobian and compare the
// final Jacobian with the implicit-function solution.
#include "piggyback.hpp"

#include <cstdio>

int main()
{
    using namespace piggyback;

    ModelSpec spec;
    spec.kind = ModelKind::Ridge;
    spec.seed = 7;
    const Model model = Model::generate(spec);

    SplitMix64 rng(derive_seed(spec.seed, "theta"));
    Vector theta(model.param_dim());
    for (Index i = 0; i < theta.size(); ++i) {
        theta[i] = rng.normal();
    }

    const auto oracle = solve(model, theta);
    const auto schedule = StepSchedule::constant(oracle.mu() / (4.0 * oracle.L() * oracle.L()));
    SampleStream stream(42, static_cast<std::uint64_t>(model.num_samples()));

    std::printf("%8s %14s %14s\n", "k", "|x - x*|", "|D - D*|_F");
    run_observed(model, theta, Vector::Zero(model.dim()), Matrix::Zero(model.dim(), model.param_dim()), schedule,
        stream, 20000, 2000, [&](const JointState& s) {
            std::printf("%8zu %14.6e %14.6e\n", s.k, (s.x - oracle.x_star).norm(), (s.D - oracle.D_star).norm());
        });
    return 0;
}
