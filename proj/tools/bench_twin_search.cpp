// Benchmark of the twin-search kernel: OpenMP-parallel search against the
// serial reference, verifying both return identical matches.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "glyforge/common.hpp"
#include "glyforge/hovorka.hpp"
#include "glyforge/iob.hpp"
#include "glyforge/matching.hpp"
#include "glyforge/population.hpp"
#include "glyforge/segments.hpp"

using namespace glyforge;

namespace {

// A synthetic but physically plausible workload: histories simulated from
// random population twins under a constant basal, read back as segments.
struct Workload {
    std::vector<segments::Segment> segs;
    std::vector<std::vector<iob::InsulinEvent>> events;
};

Workload make_workload(const population::TwinPopulation& pop, int n_segments,
                       std::uint64_t seed) {
    Workload w;
    Rng rng(seed);
    for (int i = 0; i < n_segments; ++i) {
        const auto& twin =
            pop.twins[static_cast<std::size_t>(rng.below(pop.twins.size()))];
        const double basal_uhr = rng.uniform(0.1, 0.5);
        const double u_basal = basal_uhr * 1000.0 / 60.0 / twin.params.BW;

        hovorka::TwinState x;
        try {
            x = hovorka::equilibrium_state(u_basal, twin.params);
        } catch (const NumericError&) {
            --i; // infeasible rate for this twin; redraw
            continue;
        }
        std::vector<hovorka::ControlInput> inputs(segments::kHistoryLen - 1, {u_basal, 0.0});
        const auto traj = hovorka::simulate(x, twin.params, inputs);

        segments::Segment seg;
        seg.id = i + 1;
        seg.patient_id = "bench";
        seg.decision_time = 1000.0;
        seg.hist_first = 0;
        for (int k = 0; k < segments::kHistoryLen; ++k) {
            seg.history_cgm[static_cast<std::size_t>(k)] = traj.cgm[static_cast<std::size_t>(k)];
            seg.history_mask[static_cast<std::size_t>(k)] = true;
            seg.history_observed[static_cast<std::size_t>(k)] = true;
        }
        w.segs.push_back(seg);
        w.events.push_back({{iob::EventKind::BasalRate, 0.0, basal_uhr, 0.0}});
    }
    return w;
}

double run(const Workload& w, const population::TwinPopulation& pop, bool parallel,
           std::vector<std::pair<int, double>>& results) {
    matching::MatchingConfig cfg;
    results.clear();
    const auto start = std::chrono::steady_clock::now();
    for (std::size_t i = 0; i < w.segs.size(); ++i) {
        results.push_back(matching::match_twin(w.segs[i], w.events[i], pop, cfg, parallel));
    }
    const auto stop = std::chrono::steady_clock::now();
    return std::chrono::duration<double>(stop - start).count();
}

} // namespace

int main(int argc, char** argv) {
    int n_segments = 20;
    int pop_size = 300;
    if (argc > 1) n_segments = std::atoi(argv[1]);
    if (argc > 2) pop_size = std::atoi(argv[2]);

    const auto pop = population::generate_population(42, pop_size);
    const auto w = make_workload(pop, n_segments, 7);

#ifdef _OPENMP
    std::printf("OpenMP threads: %d\n", omp_get_max_threads());
#else
    std::printf("built without OpenMP; both paths run serially\n");
#endif
    std::printf("workload: %d segments x %d twins\n", n_segments, pop_size);

    std::vector<std::pair<int, double>> serial_results, parallel_results;
    const double t_serial = run(w, pop, false, serial_results);
    const double t_parallel = run(w, pop, true, parallel_results);

    if (serial_results != parallel_results) {
        std::printf("MISMATCH between serial reference and parallel kernel\n");
        return 1;
    }
    std::printf("serial reference: %.3f s (%.1f twin-searches/s)\n", t_serial,
                n_segments / t_serial);
    std::printf("parallel kernel:  %.3f s (%.1f twin-searches/s)\n", t_parallel,
                n_segments / t_parallel);
    std::printf("speedup: %.2fx, results identical\n", t_serial / t_parallel);
    return 0;
}
