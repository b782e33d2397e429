#include <chrono>
#include <cmath>

#include <gtest/gtest.h>

#include "bscbf/barrier.hpp"
#include "bscbf/benchmarks.hpp"

using namespace bscbf;

namespace {

double rel_err(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

std::vector<Vec<2>> box_points(const Vec<2>& lo, const Vec<2>& hi, int n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<Vec<2>> out(n);
    for (auto& x : out) x = Vec<2>(uniform(rng, lo[0], hi[0]), uniform(rng, lo[1], hi[1]));
    return out;
}

RegionSampler<2> unit_disk() {
    return {Vec<2>(-1.0, -1.0), Vec<2>(1.0, 1.0), [](const Vec<2>& x) { return x.squaredNorm() <= 1.0; }};
}

}  // namespace

TEST(Generator, ConstantFieldIsAnnihilated) {
    const auto m = example1_model(Vec<2>::Zero());
    const auto B = ScalarField<2>::dual([](const auto& x) {
        using T = typename std::decay_t<decltype(x)>::value_type;
        return T(3.0);
    });
    const auto gen = generator(m, B, Vec<2>(0.3, 0.4));
    EXPECT_EQ(gen.c0, 0.0);
    EXPECT_EQ(gen.c1[0], 0.0);
}

TEST(Generator, Example1AtUnitPoint) {
    const auto m = example1_model(Vec<2>(0.2, 0.2));
    const auto gen = generator(m, ScalarField<2>::dual(example1_h_fn()), Vec<2>(1.0, 1.0));
    EXPECT_NEAR(gen.c1[0], -2.0, 1e-14);
    EXPECT_NEAR(gen.c0, 1.12, 1e-14);
}

TEST(Generator, DualMatchesHandDerivedOracles) {
    const Vec<2> sigma(0.2, 0.3);
    const auto m1 = example1_model(sigma);
    const auto h1 = ScalarField<2>::dual(example1_h_fn());
    for (const auto& x : box_points(Vec<2>(-1, -1), Vec<2>(1, 1), 200, 11)) {
        const auto gen = generator(m1, h1, x);
        const auto ref = example1_generator(x, sigma);
        EXPECT_LE(rel_err(gen.c0, ref.c0), 1e-12);
        EXPECT_LE(rel_err(gen.c1[0], ref.c1), 1e-12);
    }
    const AccParams p;
    const Vec<2> s2(0.5, 0.5);
    const auto pb = benchmark_problem("acc", s2);
    const auto chain = build_chain(pb.model, pb.h, 2);
    for (const auto& x : box_points(Vec<2>(5, 11), Vec<2>(25, 40), 200, 12)) {
        EXPECT_LE(rel_err(chain.level(1).b.value(x), acc_b1(x, s2, p)), 1e-10);
        const auto gen = chain.top_generator(x);
        const auto ref = acc_b2(x, s2, p);
        EXPECT_LE(std::abs(gen.c0 - ref.c0) / std::max(1.0, std::abs(ref.c0)), 1e-10);
        EXPECT_LE(std::abs(gen.c1[0] - ref.c1) / std::max(1e-12, std::abs(ref.c1)), 1e-10);
    }
}

TEST(Generator, PrintedFormsAreDiscrepancies) {
    const Vec<2> sigma(0.2, 0.3);
    const Vec<2> x(0.5, 0.4);
    const auto a = example1_generator(x, sigma);
    const auto b = example1_generator_hand_expanded(x, sigma);
    EXPECT_GT(std::abs(a.c0 - b.c0), 1e-3);
    EXPECT_EQ(a.c1, b.c1);
    const AccParams p;
    const Vec<2> xa(10.0, 15.0), s2(0.5, 0.5);
    EXPECT_GT(std::abs(acc_b1(xa, s2, p) - acc_b1_hand_expanded(xa, p)), 1.0);
    EXPECT_GT(std::abs(acc_b2(xa, s2, p).c1 - acc_b2_hand_expanded(xa, s2, p).c1), 1e-3);
}

TEST(Generator, Linearity) {
    const auto m = example1_model(Vec<2>(0.2, 0.4));
    const auto B1 = ScalarField<2>::dual(example1_h_fn());
    const auto B2 = ScalarField<2>::dual([](const auto& x) { return sin(x[0]) * x[1] * x[1]; });
    Rng rng(5);
    for (const auto& x : box_points(Vec<2>(-1, -1), Vec<2>(1, 1), 50, 13)) {
        const double a = uniform(rng, -3, 3), b = uniform(rng, -3, 3);
        const auto Bc = ScalarField<2>::dual([a, b](const auto& y) {
            return a * (1.0 - y[0] * y[0] - y[1] * y[1]) + b * (sin(y[0]) * y[1] * y[1]);
        });
        const auto g1 = generator(m, B1, x), g2 = generator(m, B2, x), gc = generator(m, Bc, x);
        EXPECT_NEAR(gc.c0, a * g1.c0 + b * g2.c0, 1e-12);
        EXPECT_NEAR(gc.c1[0], a * g1.c1[0] + b * g2.c1[0], 1e-12);
    }
}

TEST(Generator, DeterministicReductionIsLieDerivative) {
    const auto m = example1_model(Vec<2>::Zero());
    const auto h = example1_h_analytic();
    for (const auto& x : box_points(Vec<2>(-1, -1), Vec<2>(1, 1), 100, 14)) {
        const auto gen = generator(m, h, x);
        EXPECT_NEAR(gen.c0, h.gradient(x).dot(m.drift(x)), 1e-10);
        EXPECT_NEAR(gen.c1[0], h.gradient(x).dot(m.control_matrix(x).col(0)), 1e-10);
    }
}

TEST(Generator, NonFiniteDerivativeIsEvaluationError) {
    const auto m = example1_model(Vec<2>::Zero());
    const auto B = ScalarField<2>::dual([](const auto& x) { return sqrt(x[0]); });
    try {
        generator(m, B, Vec<2>(0.0, 0.5));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Evaluation);
    }
}

TEST(ScalarFieldModes, AnalyticDualAndFiniteDifferenceAgree) {
    const auto dual = ScalarField<2>::dual(example1_h_fn());
    const auto ana = example1_h_analytic();
    const auto fd = ScalarField<2>::finite_difference(example1_h_fn());
    for (const auto& x : box_points(Vec<2>(-1, -1), Vec<2>(1, 1), 1000, 15)) {
        EXPECT_LE((dual.gradient(x) - ana.gradient(x)).cwiseAbs().maxCoeff(), 1e-12);
        EXPECT_LE((fd.gradient(x) - ana.gradient(x)).cwiseAbs().maxCoeff(), 1e-5);
        EXPECT_LE((fd.hessian(x) - ana.hessian(x)).cwiseAbs().maxCoeff(), 1e-5);
        EXPECT_EQ(dual.hessian_asymmetry(x), 0.0);
    }
    EXPECT_EQ(fd.derivation(), Derivation::finite_difference);
    EXPECT_EQ(ana.derivation(), Derivation::analytic);
}

TEST(Chain, Example1RelativeDegreeOne) {
    const auto pb = benchmark_problem("example1", Vec<2>(0.2, 0.2));
    ChainOptions<2> opts;
    opts.probes = box_points(Vec<2>(-0.7, -0.7), Vec<2>(0.7, 0.7), 100, 16);
    opts.sup_estimator = [](const ScalarField<2>& b, int) { return sup_over_set(b, unit_disk(), 20000, 1); };
    const auto chain = build_chain(pb.model, pb.h, 1, opts);
    EXPECT_EQ(chain.relative_degree(), 1);
    EXPECT_NEAR(chain.level(0).c, 1.0, 1e-2);
    for (const auto& x : opts.probes) {
        const auto a = chain.top_generator(x), b = generator(pb.model, pb.h, x);
        EXPECT_EQ(a.c0, b.c0);
        EXPECT_EQ(a.c1, b.c1);
    }
    const auto j = chain.report();
    EXPECT_EQ(j["r"], 1);
    EXPECT_EQ(j["derivation"], "dual-number-automatic");
    EXPECT_EQ(j["levels"][0]["probe_stats"]["n"], 100);
}

TEST(Chain, AccSecondLevelContainsDriftAndItoTerms) {
    const AccParams p;
    const auto pb = benchmark_problem("acc", Vec<2>(0.5, 0.5));
    const auto chain = build_chain(pb.model, pb.h, 2);
    const Vec<2> x(10.0, 15.0);
    const double e = 5.0;
    EXPECT_NEAR(chain.level(1).b.value(x), 5.0 * std::pow(e, 4) * (p.v_f - 10.0) + 10.0 * 0.25 * std::pow(e, 3),
                1e-9);
    EXPECT_EQ(chain.first_exited_level(x), -1);
    EXPECT_EQ(chain.first_exited_level(Vec<2>(20.0, 15.0)), 1);
}

TEST(Chain, RelativeDegreeViolationNamesLevel) {
    const auto pb = benchmark_problem("example1", Vec<2>(0.2, 0.2));
    ChainOptions<2> opts;
    opts.probes = {Vec<2>(0.1, 0.5)};
    try {
        build_chain(pb.model, pb.h, 2, opts);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::RelativeDegree);
        EXPECT_NE(std::string(e.what()).find("b_0"), std::string::npos);
    }
    opts.policy = RelativeDegreePolicy::drop;
    const auto chain = build_chain(pb.model, pb.h, 2, opts);
    EXPECT_GT(chain.level(0).max_control_cosine, 0.1);
}

TEST(Chain, SupremumDominatesProbes) {
    const auto pb = benchmark_problem("example1", Vec<2>(0.2, 0.2));
    ChainOptions<2> opts;
    opts.probes = box_points(Vec<2>(-0.7, -0.7), Vec<2>(0.7, 0.7), 100, 17);
    opts.sup_estimator = [](const ScalarField<2>& b, int) { return sup_over_set(b, unit_disk(), 5000, 2); };
    const auto chain = build_chain(pb.model, pb.h, 1, opts);
    for (const auto& x : opts.probes)
        if (pb.h.value(x) >= 0) EXPECT_GE(chain.level(0).c + 1e-3, pb.h.value(x));
}

TEST(Sup, UnitDiskMaximum) {
    const auto h = ScalarField<2>::dual(example1_h_fn());
    const auto est = sup_over_set(h, unit_disk(), 100000, 3);
    EXPECT_NEAR(est.value, 1.0, 1e-3);
    EXPECT_EQ(est.n_samples, 100000);
    EXPECT_FALSE(est.unbounded_suspect);
    const auto again = sup_over_set(h, unit_disk(), 100000, 3);
    EXPECT_EQ(est.value, again.value);
}

TEST(Sup, ConstantField) {
    const auto b = ScalarField<2>::dual([](const auto& x) {
        using T = typename std::decay_t<decltype(x)>::value_type;
        return T(5.0);
    });
    EXPECT_EQ(sup_over_set(b, unit_disk(), 100, 4).value, 5.0);
}

TEST(Sup, UnboundedGrowthIsFlagged) {
    const auto h = ScalarField<2>::dual(acc_h_fn(10.0));
    const RegionSampler<2> region{Vec<2>(0.0, 10.0), Vec<2>(30.0, 50.0),
                                  [](const Vec<2>& x) { return x[1] >= 10.0; }};
    const auto est = sup_over_set(h, region, 20000, 5);
    EXPECT_TRUE(est.unbounded_suspect);
}

TEST(Sup, EmptySetIsEstimationError) {
    const auto h = ScalarField<2>::dual(example1_h_fn());
    const RegionSampler<2> region{Vec<2>(-1, -1), Vec<2>(1, 1), [](const Vec<2>&) { return false; }};
    try {
        sup_over_set(h, region, 10, 6);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Estimation);
    }
}

TEST(Bound, PublishedExample1Values) {
    const auto h = example1_h_analytic();
    const auto b1 = worst_case_bound(BoundKind::SCBF, {{h.value(Vec<2>(-0.1, 0.7))}, {1.0}});
    const auto b2 = worst_case_bound(BoundKind::SCBF, {{h.value(Vec<2>(-0.1, 0.8))}, {1.0}});
    EXPECT_NEAR(b1.value, 0.5, 1e-15);
    EXPECT_NEAR(b2.value, 0.35, 1e-15);
    const auto j = to_json(b1);
    EXPECT_EQ(j["kind"], "SCBF");
    EXPECT_EQ(j["c"][0], 1.0);
}

TEST(Bound, SzcbfBoundaryAlgebra) {
    EXPECT_NEAR(worst_case_bound(BoundKind::SZCBF, {{2.0}, {2.0}, 1.5}).value, std::exp(-3.0), 1e-15);
    EXPECT_EQ(worst_case_bound(BoundKind::SZCBF, {{2.0}, {2.0}, 0.0}).value, 1.0);
}

TEST(Bound, HighOrderIsProductAndMonotone) {
    const auto b = worst_case_bound(BoundKind::HighOrder, {{0.5, 3.0}, {1.0, 4.0}});
    EXPECT_NEAR(b.value, 0.375, 1e-15);
    EXPECT_LE(b.value, 0.5);
    EXPECT_LE(b.value, 0.75);
    double prev = 0.0;
    for (double hx = 0.0; hx <= 1.0; hx += 0.05) {
        const double v = worst_case_bound(BoundKind::SCBF, {{hx}, {1.0}}).value;
        EXPECT_GE(v, prev);
        prev = v;
        EXPECT_LE(worst_case_bound(BoundKind::SCBF, {{hx}, {2.0}}).value, v);
    }
}

TEST(Bound, OutsideLevelSetNamesLevel) {
    try {
        worst_case_bound(BoundKind::HighOrder, {{0.5, -1.0}, {1.0, 4.0}});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::InvalidInitialState);
        EXPECT_NE(std::string(e.what()).find("C_1"), std::string::npos);
    }
}

TEST(Bound, ClampedAndFast) {
    EXPECT_EQ(worst_case_bound(BoundKind::SCBF, {{3.0}, {1.0}}).value, 1.0);
    const auto t0 = std::chrono::steady_clock::now();
    volatile double sink = 0.0;
    for (int i = 0; i < 1000; ++i) sink = sink + worst_case_bound(BoundKind::SCBF, {{0.5}, {1.0}}).value;
    const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    EXPECT_LT(ms / 1000.0, 1.0);
}
