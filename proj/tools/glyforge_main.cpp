#include <CLI11.hpp>

#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include "glyforge/common.hpp"
#include "glyforge/pipeline.hpp"

namespace {

using glyforge::pipeline::RunConfig;

struct GlobalOptions {
    std::string config_path;
    std::string data_dir;
    int threads = -1; // -1 = not set on the command line
    std::vector<std::string> overrides;
};

RunConfig resolve_config(const GlobalOptions& g) {
    RunConfig cfg = g.config_path.empty() ? RunConfig::defaults()
                                          : RunConfig::from_file(g.config_path);
    if (!g.data_dir.empty()) cfg.values["data_dir"] = g.data_dir;
    if (g.threads >= 0) cfg.values["threads"] = std::to_string(g.threads);
    for (const auto& o : g.overrides) cfg.apply_override(o);
    return cfg;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"glyforge: glucose forecasting with digital-twin features"};
    app.require_subcommand(1);

    GlobalOptions g;
    app.add_option("-c,--config", g.config_path, "key=value config file");
    app.add_option("-d,--data-dir", g.data_dir,
                   "data directory (default: $GLYFORGE_DATA_DIR or ./data)");
    app.add_option("--threads", g.threads,
                   "worker threads; 1 guarantees bit-reproducible output");
    app.add_option("-D,--set", g.overrides, "config override key=value (repeatable)");

    // Per-stage subcommands plus `pipeline` running everything.
    struct StageCmd {
        const char* name;
        const char* help;
    };
    const StageCmd stages[] = {
        {"synth", "generate the synthetic cohort"},
        {"population", "generate the twin population"},
        {"extract", "extract and quality-filter segments"},
        {"match", "match each segment to its best twin"},
        {"train", "train the neural forecasters"},
        {"forecast", "produce test-set forecasts for every model"},
        {"evaluate", "compute metrics and render the report"},
    };
    for (const auto& s : stages) app.add_subcommand(s.name, s.help)->fallthrough();
    auto* pipe = app.add_subcommand("pipeline", "run all stages in order");
    pipe->fallthrough();
    std::vector<std::string> pipe_stages;
    pipe->add_option("--stages", pipe_stages,
                     "subset of stages to run (dependency order enforced)");
    app.add_subcommand("report", "alias for evaluate")->fallthrough();

    // Convenience options mirrored onto config keys.
    for (auto* sub : app.get_subcommands({})) (void)sub;
    auto* synth_cmd = app.get_subcommand("synth");
    int patients = -1, days = -1;
    std::int64_t synth_seed = -1;
    synth_cmd->add_option("--patients", patients, "number of patients");
    synth_cmd->add_option("--days", days, "days per patient");
    synth_cmd->add_option("--seed", synth_seed, "cohort seed");
    auto* pop_cmd = app.get_subcommand("population");
    std::int64_t pop_seed = -1;
    pop_cmd->add_option("--seed", pop_seed, "population seed");

    CLI11_PARSE(app, argc, argv);

    try {
        RunConfig cfg = resolve_config(g);
        if (patients >= 0) cfg.values["cohort.patients"] = std::to_string(patients);
        if (days >= 0) cfg.values["cohort.days"] = std::to_string(days);
        if (synth_seed >= 0) cfg.values["cohort.seed"] = std::to_string(synth_seed);
        if (pop_seed >= 0) cfg.values["population.seed"] = std::to_string(pop_seed);

        const auto& subs = app.get_subcommands();
        const std::string cmd = subs.at(0)->get_name();
        if (cmd == "pipeline") {
            glyforge::pipeline::run_pipeline(cfg, pipe_stages);
        } else if (cmd == "report" || cmd == "evaluate") {
            glyforge::pipeline::stage_evaluate(cfg);
        } else {
            glyforge::pipeline::run_pipeline(cfg, {cmd});
        }
        return 0;
    } catch (const glyforge::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const glyforge::DataError& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return 3;
    } catch (const glyforge::NumericError& e) {
        std::fprintf(stderr, "numeric error: %s\n", e.what());
        return 4;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
