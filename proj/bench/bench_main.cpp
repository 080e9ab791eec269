// Benchmark comparing the OpenMP kernels against the serial reference on the
// data-parallel hot spots: weighted norms, ball ratios, and per-scale model
// evaluation sweeps. Outputs one table row per kernel with both timings and
// the speedup; also asserts the results agree bit for bit.

#include <chrono>
#include <cstdio>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "rgflow/homotopy.hpp"
#include "rgflow/kernels.hpp"
#include "rgflow/rng.hpp"
#include "rgflow/verify.hpp"

using namespace rgflow;
using kernels::Exec;
using Clock = std::chrono::steady_clock;

namespace {

double time_ms(const std::function<void()>& f, int reps) {
    f(); // warm up
    auto t0 = Clock::now();
    for (int r = 0; r < reps; ++r) f();
    auto t1 = Clock::now();
    return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

void row(const std::string& name, double serial_ms, double parallel_ms, bool equal) {
    std::printf("%-28s %10.3f ms %10.3f ms   x%-6.2f %s\n", name.c_str(), serial_ms,
                parallel_ms, parallel_ms > 0 ? serial_ms / parallel_ms : 0.0,
                equal ? "bitwise-equal" : "MISMATCH");
}

} // namespace

int main() {
#ifdef _OPENMP
    std::printf("OpenMP threads: %d\n", omp_get_max_threads());
#else
    std::printf("OpenMP not compiled in; both columns run serial\n");
#endif
    std::printf("%-28s %13s %13s   %-8s\n", "kernel", "serial", "parallel", "speedup");

    const std::size_t J = 2000000;
    ParamSeq p = instances::infinite_cutoff();
    std::vector<double> g = iterate_gbar(0.03, p, J);
    CutoffData cut = cutoff_time(p);
    WeightScheme scheme(g, cut, 1.0, 0.5, 3.0);
    Rng rng(7);
    FlowSequence x(J), y(J);
    for (std::size_t j = 0; j <= J; ++j) {
        x[j].K.assign(2, rng.symmetric());
        y[j].K.assign(2, rng.symmetric());
        x[j].V = VTriple(rng.symmetric(), rng.symmetric(), rng.symmetric());
        y[j].V = VTriple(rng.symmetric(), rng.symmetric(), rng.symmetric());
    }

    {
        double rs = 0, rp = 0;
        double ts = time_ms([&] { rs = kernels::weighted_sup(x, nullptr, scheme,
                                                             WhichNorm::W, Exec::Serial); },
                            5);
        double tp = time_ms([&] { rp = kernels::weighted_sup(x, nullptr, scheme,
                                                             WhichNorm::W, Exec::Parallel); },
                            5);
        row("weighted_sup (J=2e6)", ts, tp, rs == rp);
    }
    {
        BallRatios bs, bp;
        double ts = time_ms(
            [&] { bs = kernels::ball_ratios_impl(x, y, scheme, Exec::Serial); }, 5);
        double tp = time_ms(
            [&] { bp = kernels::ball_ratios_impl(x, y, scheme, Exec::Parallel); }, 5);
        row("ball_ratios (J=2e6)", ts, tp,
            bs.K == bp.K && bs.g == bp.g && bs.z == bp.z && bs.mu == bp.mu);
    }
    {
        // model-evaluation sweep: the rho pass of an F evaluation
        InstanceConfig cfg;
        cfg.params = instances::finite_cutoff();
        cfg.model.kind = "random-poly";
        cfg.g0 = 0.02;
        cfg.horizon = 120;
        auto inst = make_instance(cfg);
        const std::size_t Ji = inst->horizon;
        std::vector<VTriple> out_s(Ji + 1), out_p(Ji + 1);
        auto pass = [&](Exec e, std::vector<VTriple>& out) {
            kernels::for_each_index(
                0, Ji,
                [&](std::size_t j) {
                    out[j] = inst->model->rho(j, inst->xbar[j].K, inst->xbar[j].V);
                },
                e);
        };
        double ts = time_ms([&] { pass(Exec::Serial, out_s); }, 50);
        double tp = time_ms([&] { pass(Exec::Parallel, out_p); }, 50);
        bool eq = true;
        for (std::size_t j = 0; j <= Ji; ++j)
            eq = eq && out_s[j].g == out_p[j].g && out_s[j].z == out_p[j].z &&
                 out_s[j].mu == out_p[j].mu;
        row("rho sweep (J=120, poly)", ts, tp, eq);
    }
    return 0;
}
