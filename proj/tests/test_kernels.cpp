#include <doctest.h>

#include <cmath>

#include "rgflow/kernels.hpp"
#include "rgflow/quadratic.hpp"
#include "rgflow/rng.hpp"
#include "rgflow/verify.hpp"
#include "rgflow/weights.hpp"

using namespace rgflow;
using kernels::Exec;

namespace {

struct Setup {
    ParamSeq p = instances::infinite_cutoff();
    std::vector<double> g;
    CutoffData cut;
    WeightScheme scheme;
    FlowSequence x, y;

    explicit Setup(std::size_t J)
        : g(iterate_gbar(0.03, p, J)), cut(cutoff_time(p)),
          scheme(g, cut, 1.0, 0.5, 3.0), x(J), y(J) {
        Rng rng(404);
        for (std::size_t j = 0; j <= J; ++j) {
            x[j].K.assign(3, 0.0);
            y[j].K.assign(3, 0.0);
            for (double& k : x[j].K) k = rng.symmetric();
            for (double& k : y[j].K) k = rng.symmetric();
            x[j].V = VTriple(rng.symmetric(), rng.symmetric(), rng.symmetric());
            y[j].V = VTriple(rng.symmetric(), rng.symmetric(), rng.symmetric());
        }
    }
};

} // namespace

TEST_CASE("weighted_sup: parallel kernel is bit-identical to the serial reference") {
    Setup s(20000);
    double ser = kernels::weighted_sup(s.x, nullptr, s.scheme, WhichNorm::W, Exec::Serial);
    double par = kernels::weighted_sup(s.x, nullptr, s.scheme, WhichNorm::W, Exec::Parallel);
    CHECK(ser == par);

    double ser_d =
        kernels::weighted_sup(s.x, &s.y, s.scheme, WhichNorm::V, Exec::Serial);
    double par_d =
        kernels::weighted_sup(s.x, &s.y, s.scheme, WhichNorm::V, Exec::Parallel);
    CHECK(ser_d == par_d);
}

TEST_CASE("ball_ratios: parallel kernel is bit-identical to the serial reference") {
    Setup s(20000);
    BallRatios a = kernels::ball_ratios_impl(s.x, s.y, s.scheme, Exec::Serial);
    BallRatios b = kernels::ball_ratios_impl(s.x, s.y, s.scheme, Exec::Parallel);
    CHECK(a.K == b.K);
    CHECK(a.g == b.g);
    CHECK(a.z == b.z);
    CHECK(a.mu == b.mu);
}

TEST_CASE("max_over_indices: identical across policies and reruns") {
    Setup s(50000);
    auto score = [&](std::size_t j) {
        return std::abs(s.x[j].V.g) * s.g[j] + std::abs(s.x[j].K[1]);
    };
    double ser = kernels::max_over_indices(0, 50000, score, Exec::Serial);
    double par1 = kernels::max_over_indices(0, 50000, score, Exec::Parallel);
    double par2 = kernels::max_over_indices(0, 50000, score, Exec::Parallel);
    CHECK(ser == par1);
    CHECK(par1 == par2);
}

TEST_CASE("for_each_index: independent slot writes agree across policies") {
    const std::size_t n = 30000;
    std::vector<double> a(n + 1), b(n + 1);
    auto body_into = [&](std::vector<double>& out) {
        return [&out](std::size_t j) {
            out[j] = std::sin(static_cast<double>(j) * 0.001) * std::sqrt(double(j + 1));
        };
    };
    kernels::for_each_index(0, n, body_into(a), Exec::Serial);
    kernels::for_each_index(0, n, body_into(b), Exec::Parallel);
    for (std::size_t j = 0; j <= n; j += 997) CHECK(a[j] == b[j]);
    CHECK(a[n] == b[n]);
}

TEST_CASE("default exec policy is settable and sticky") {
    Exec old = kernels::default_exec();
    kernels::set_default_exec(Exec::Serial);
    CHECK(kernels::default_exec() == Exec::Serial);
    kernels::set_default_exec(old);
    CHECK(kernels::default_exec() == old);
}
