#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "sbtd/experiments.hpp"

#include "helpers.hpp"
#include "oracles.hpp"

#include <algorithm>
#include <random>

using namespace sbtd;
using testutil::rel_diff;

namespace {

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
}

using testutil::perturb;

}  // namespace

TEST_CASE("generators are deterministic under the seed") {
    IllCondParams p;
    p.divergence = 25.0;
    p.seed = 5;
    const IllCondInstance a = gen_illcond_btd(p);
    const IllCondInstance b = gen_illcond_btd(p);
    for (size_t r = 0; r < 2; ++r) {
        CHECK(a.core.terms[r].core.data() == b.core.terms[r].core.data());
        for (size_t d = 0; d < 3; ++d)
            CHECK((a.core.terms[r].factors[d] - b.core.terms[r].factors[d]).norm() == 0.0);
        for (size_t d = 0; d < 3; ++d)
            CHECK((a.inflated.terms[r].factors[d] - b.inflated.terms[r].factors[d]).norm() == 0.0);
    }
    const Sbtd s1 = gen_random_sbtd({4, 4, 3}, {TermSpec{CoreStructure::FullRank, {2, 2, 1}}}, 9);
    const Sbtd s2 = gen_random_sbtd({4, 4, 3}, {TermSpec{CoreStructure::FullRank, {2, 2, 1}}}, 9);
    CHECK(s1.terms[0].core.data() == s2.terms[0].core.data());
    for (size_t d = 0; d < 3; ++d)
        CHECK((s1.terms[0].factors[d] - s2.terms[0].factors[d]).norm() == 0.0);
}

TEST_CASE("illcond instance: term cores have multilinear rank (2,2,1)") {
    IllCondParams p;
    p.divergence = 100.0;
    p.seed = 21;
    const IllCondInstance inst = gen_illcond_btd(p);
    for (const auto& term : inst.core.terms) {
        CHECK(multilinear_rank(term.core) == std::vector<Index>{2, 2, 1});
        CHECK(validate(inst.core).ok);
    }
}

TEST_CASE("illcond sums stay bounded: the O(N) parts cancel") {
    auto norm_at = [](double n1, double n2, std::uint64_t seed) {
        IllCondParams p;
        p.seed = seed;
        p.divergence = n1;
        const DenseTensor a = evaluate_sum(gen_illcond_btd(p).core);
        p.divergence = n2;
        const DenseTensor b = evaluate_sum(gen_illcond_btd(p).core);
        return (a.vec() - b.vec()).norm();
    };
    // ||G_N - G_2N|| decays like 1/N
    const double r10 = norm_at(10, 20, 33);
    const double r1000 = norm_at(1000, 2000, 33);
    CHECK(r1000 < r10 / 20.0);
}

TEST_CASE("illcond kappa grows with N") {
    std::vector<double> lo, hi;
    for (std::uint64_t seed = 0; seed < 15; ++seed) {
        IllCondParams p;
        p.seed = seed;
        p.divergence = 10.0;
        lo.push_back(condition_direct(gen_illcond_btd(p).core).kappa);
        p.divergence = 1e4;
        hi.push_back(condition_direct(gen_illcond_btd(p).core).kappa);
    }
    CHECK(median(hi) > median(lo));
}

TEST_CASE("illcond inflation preserves kappa") {
    IllCondParams p;
    p.divergence = 100.0;
    p.seed = 55;
    p.inflated_dims = {20, 15, 12};
    const IllCondInstance inst = gen_illcond_btd(p);
    const double k_core = condition_direct(inst.core).kappa;
    const double k_big = condition_direct(inst.inflated).kappa;
    CHECK(rel_diff(k_core, k_big) <= 1e-8);
}

TEST_CASE("gen_random_sbtd produces valid decompositions with expected Terracini shape") {
    const std::vector<TermSpec> specs(2, TermSpec{CoreStructure::FullRank, {2, 2, 1}});
    const Sbtd s = gen_random_sbtd({4, 4, 2}, specs, 77);
    CHECK(validate(s).ok);
    const TerraciniMatrix t = assemble_terracini(s);
    CHECK(t.matrix.rows() == 32);
    CHECK(t.matrix.cols() == 26);  // 2 * (4 + 2*2 + 2*2 + 1*1)

    const Sbtd cpd = gen_random_sbtd({5, 5, 5},
                                     std::vector<TermSpec>(3, TermSpec{CoreStructure::Rank1, {1, 1, 1}}),
                                     78);
    CHECK(validate(cpd).ok);
    for (const auto& term : cpd.terms) CHECK(term.structure == CoreStructure::Rank1);

    CHECK_THROWS_AS(gen_random_sbtd({2, 2, 2}, {TermSpec{CoreStructure::FullRank, {3, 1, 1}}}, 1),
                    std::invalid_argument);
}

TEST_CASE("perturbation probe stays below kappa and attains it in the singular direction") {
    IllCondParams p;
    p.divergence = 100.0;
    p.seed = 91;
    const IllCondInstance inst = gen_illcond_btd(p);
    const double kappa = condition_direct(inst.core).kappa;
    const ProbeResult res = perturbation_probe(inst.core, 1000, 17);
    CHECK(res.samples == 1000);
    // cross-check against the independently computed condition number
    CHECK(oracle::rel_err(res.kappa_ref, kappa) <= 1e-8);
    CHECK(res.max_ratio <= res.kappa_ref * (1 + 1e-8));
    CHECK(res.mean_ratio < res.kappa_ref);
    CHECK(res.mean_ratio <= res.max_ratio);
    CHECK(oracle::rel_err(res.singular_ratio, res.kappa_ref) <= 1e-10);
}

TEST_CASE("perturbation probe rejects ill-posed inputs") {
    const Sbtd bad = testutil::gen_shared_kernel_illposed(3);
    CHECK_THROWS_AS(perturbation_probe(bad, 10, 1), std::invalid_argument);
}

TEST_CASE("fit_btd returns immediately on an exact initialization") {
    IllCondParams p;
    p.divergence = 10.0;
    p.seed = 111;
    const Sbtd truth = gen_illcond_btd(p).core;
    const DenseTensor target = evaluate_sum(truth);
    const FitResult fit = fit_btd(target, truth, 50, 1e-10);
    CHECK(fit.iterations == 0);
    CHECK(fit.residual_history.front() <= 1e-14 * norm(target));
}

TEST_CASE("fit_btd converges from a slightly perturbed initialization") {
    const std::vector<TermSpec> specs(2, TermSpec{CoreStructure::FullRank, {2, 2, 1}});
    const Sbtd truth = testutil::gen_odeco_sbtd({5, 5, 3}, specs, 123);  // kappa = 1
    REQUIRE(condition_direct(truth).kappa < 10.0);
    const DenseTensor target = evaluate_sum(truth);
    const Sbtd init = perturb(truth, 1e-6, 7);
    const FitResult fit = fit_btd(target, init, 50, 1e-10);
    CHECK(fit.residual_history.back() <= 1e-10);
    CHECK(fit.iterations <= 50);
    // accepted residuals decrease monotonically
    for (size_t i = 1; i < fit.residual_history.size(); ++i)
        CHECK(fit.residual_history[i] < fit.residual_history[i - 1]);
}

TEST_CASE("fit jacobian matches central finite differences") {
    const Sbtd s = gen_random_sbtd({3, 3, 2},
                                   {TermSpec{CoreStructure::FullRank, {2, 2, 1}},
                                    TermSpec{CoreStructure::Rank1, {1, 1, 1}}},
                                   131);
    const DenseTensor target(std::vector<Index>{3, 3, 2});
    const Eigen::MatrixXd jac = fit_jacobian(s);
    const double h = 1e-6;
    Eigen::MatrixXd fd(jac.rows(), jac.cols());
    Index col = 0;
    Sbtd sp = s, sm = s;
    for (size_t r = 0; r < s.terms.size(); ++r) {
        for (size_t d = 0; d < s.terms[r].factors.size(); ++d)
            for (Index j = 0; j < s.terms[r].factors[d].cols(); ++j)
                for (Index i = 0; i < s.terms[r].factors[d].rows(); ++i) {
                    sp.terms[r].factors[d](i, j) += h;
                    sm.terms[r].factors[d](i, j) -= h;
                    fd.col(col++) =
                        (fit_residual(target, sp) - fit_residual(target, sm)) / (2 * h);
                    sp.terms[r].factors[d](i, j) = s.terms[r].factors[d](i, j);
                    sm.terms[r].factors[d](i, j) = s.terms[r].factors[d](i, j);
                }
        for (Index i = 0; i < s.terms[r].core.size(); ++i) {
            sp.terms[r].core[i] += h;
            sm.terms[r].core[i] -= h;
            fd.col(col++) = (fit_residual(target, sp) - fit_residual(target, sm)) / (2 * h);
            sp.terms[r].core[i] = s.terms[r].core[i];
            sm.terms[r].core[i] = s.terms[r].core[i];
        }
    }
    REQUIRE(col == jac.cols());
    CHECK((jac - fd).norm() <= 1e-6 * jac.norm());
}

TEST_CASE("fit iteration counts grow with the divergence parameter") {
    std::vector<double> iters_lo, iters_hi;
    for (std::uint64_t seed = 0; seed < 9; ++seed) {
        for (const double n : {10.0, 1000.0}) {
            IllCondParams p;
            p.seed = seed;
            p.divergence = n;
            const Sbtd truth = gen_illcond_btd(p).core;
            const DenseTensor target = evaluate_sum(truth);
            const Sbtd init = perturb(truth, 1e-4, seed + 1000);
            const FitResult fit = fit_btd(target, init, 200, 1e-11);
            (n < 100 ? iters_lo : iters_hi).push_back(static_cast<double>(fit.iterations));
        }
    }
    CHECK(median(iters_hi) >= median(iters_lo));
}

TEST_CASE("error bound check") {
    IllCondParams p;
    p.divergence = 10.0;
    p.seed = 151;
    const Sbtd truth = gen_illcond_btd(p).core;
    const DenseTensor target = evaluate_sum(truth);
    SUBCASE("exact fit gives ratio 0") {
        CHECK(error_bound_check(truth, truth, target) == 0.0);
    }
    SUBCASE("tangent perturbations through the pseudoinverse respect the bound") {
        // push the truth through a first-order tangent step of size ~1e-9
        const Sbtd fitted_init = perturb(truth, 1e-10, 5);
        const FitResult fit = fit_btd(target, fitted_init, 50, 1e-12);
        const double res = (evaluate_sum(fit.fitted).vec() - target.vec()).norm();
        if (res <= 1e-8) {
            const double ratio = error_bound_check(truth, fit.fitted, target);
            CHECK(ratio <= 1.1);
        }
    }
    SUBCASE("residuals above the filter are rejected") {
        const Sbtd far = perturb(truth, 1e-2, 9);
        CHECK_THROWS_AS(error_bound_check(truth, far, target), std::invalid_argument);
    }
}
