#include "glyforge/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <numeric>
#include <sstream>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "glyforge/baselines.hpp"
#include "glyforge/evaluation.hpp"
#include "glyforge/matching.hpp"
#include "glyforge/neural.hpp"
#include "glyforge/population.hpp"
#include "glyforge/segments.hpp"
#include "glyforge/synth.hpp"

namespace glyforge::pipeline {

namespace fs = std::filesystem;

RunConfig RunConfig::defaults() {
    RunConfig cfg;
    cfg.values = {
        {"threads", "0"},
        {"cohort.patients", "20"},
        {"cohort.days", "14"},
        {"cohort.seed", "101"},
        {"cohort.population_seed", "7"},
        {"cohort.meals_per_day", "3"},
        {"cohort.carbs_mean", "60"},
        {"cohort.carbs_sd", "20"},
        {"cohort.carb_ratio_lo", "15"},
        {"cohort.carb_ratio_hi", "25"},
        {"cohort.basal_lo", "0"},
        {"cohort.basal_hi", "2"},
        {"cohort.noise_sd", "2"},
        {"cohort.dropout", "0.02"},
        {"population.seed", "42"},
        {"population.size", "300"},
        {"extract.stride_min", "30"},
        {"extract.split_seed", "5"},
        {"train.seed", "1"},
        {"train.epochs", "100"},
        {"train.batch", "64"},
        {"train.lr0", "0.001"},
        {"train.patience", "15"},
        {"train.lr_patience", "5"},
        {"train.lr_factor", "0.5"},
        {"train.lr_min", "1e-5"},
        {"train.dropout", "0.2"},
        {"train.huber_delta", "1"},
        {"train.hidden", "64"},
        {"train.recursive_hidden", "300"},
        {"train.recursive_epochs", "0"}, // 0 = same as train.epochs
        {"train.recursive_input_noise", "0"},
        {"train.recursive_rollout", "0"},
        {"train.max_train_segments", "0"},
        {"train.max_val_segments", "0"},
        {"evaluate.worst_k", "100"},
        {"models",
         "naive,digital_twin,recursive,seq2seq_full,seq2seq_minus_ode,seq2seq_minus_iob"},
    };
    return cfg;
}

RunConfig RunConfig::from_file(const std::string& path) {
    RunConfig cfg = defaults();
    const std::string text = read_text_file(path);
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos) continue;
        const auto last = line.find_last_not_of(" \t\r");
        line = line.substr(first, last - first + 1);
        const auto eq = line.find('=');
        if (eq == std::string::npos || eq == 0) {
            throw ConfigError(path + ":" + std::to_string(lineno) +
                              ": expected key=value");
        }
        cfg.values[line.substr(0, eq)] = line.substr(eq + 1);
    }
    return cfg;
}

void RunConfig::apply_override(const std::string& key_eq_value) {
    const auto eq = key_eq_value.find('=');
    if (eq == std::string::npos || eq == 0) {
        throw ConfigError("override must be key=value: " + key_eq_value);
    }
    values[key_eq_value.substr(0, eq)] = key_eq_value.substr(eq + 1);
}

bool RunConfig::has(const std::string& key) const { return values.count(key) != 0; }

const std::string& RunConfig::get_str(const std::string& key) const {
    const auto it = values.find(key);
    if (it == values.end()) throw ConfigError("missing config key: " + key);
    return it->second;
}

double RunConfig::get_num(const std::string& key) const {
    const std::string& s = get_str(key);
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config key " + key + " is not a number: " + s);
    }
}

std::int64_t RunConfig::get_int(const std::string& key) const {
    const double v = get_num(key);
    const auto i = static_cast<std::int64_t>(v);
    if (static_cast<double>(i) != v) {
        throw ConfigError("config key " + key + " must be an integer");
    }
    return i;
}

std::string RunConfig::data_dir() const {
    const auto it = values.find("data_dir");
    if (it != values.end() && !it->second.empty()) return it->second;
    if (const char* env = std::getenv("GLYFORGE_DATA_DIR");
        env != nullptr && env[0] != '\0') {
        return env;
    }
    return "./data";
}

int RunConfig::threads() const { return static_cast<int>(get_int("threads")); }

std::string RunConfig::snapshot() const {
    std::ostringstream out;
    out << "data_dir=" << data_dir() << '\n';
    for (const auto& [k, v] : values) {
        if (k == "data_dir") continue;
        out << k << '=' << v << '\n';
    }
    return out.str();
}

const char* const kStageOrder[7] = {"synth",    "population", "extract", "match",
                                    "train",    "forecast",   "evaluate"};

void write_provenance(const RunConfig& cfg, const std::string& out_dir,
                      const std::vector<std::string>& input_paths) {
    fs::create_directories(out_dir);
    write_text_file(out_dir + "/config.resolved.txt", cfg.snapshot());
    std::ostringstream manifest;
    manifest << "input\tfnv1a64\n";
    for (const auto& path : input_paths) {
        char hex[24];
        std::snprintf(hex, sizeof(hex), "%016llx",
                      static_cast<unsigned long long>(fnv1a(read_text_file(path))));
        manifest << path << '\t' << hex << '\n';
    }
    write_text_file(out_dir + "/manifest.txt", manifest.str());
}

namespace {

void apply_threads(const RunConfig& cfg) {
#ifdef _OPENMP
    const int n = cfg.threads();
    if (n > 0) omp_set_num_threads(n);
#else
    (void)cfg;
#endif
}

bool parallel_enabled(const RunConfig& cfg) { return cfg.threads() != 1; }

void require_file(const std::string& path, const std::string& producer_stage) {
    if (!fs::exists(path)) {
        throw DataError("missing artifact " + path + "; run `glyforge " +
                        producer_stage + "` first");
    }
}

// --- splits file --------------------------------------------------------------

const char* split_name(segments::Split s) {
    switch (s) {
        case segments::Split::Train: return "train";
        case segments::Split::Validation: return "validation";
        case segments::Split::Test: return "test";
    }
    throw ConfigError("split_name: bad split");
}

void save_splits(const segments::SplitAssignment& splits, const std::string& path) {
    std::ostringstream out;
    out << "# glyforge splits v1 seed=" << splits.seed << '\n';
    out << "patient_id\tsplit\n";
    for (const auto& [pid, s] : splits.by_patient) {
        out << pid << '\t' << split_name(s) << '\n';
    }
    write_text_file(path, out.str());
}

std::map<std::string, segments::Split> load_splits(const std::string& path) {
    const std::string text = read_text_file(path);
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line.rfind("# glyforge splits v1", 0) != 0) {
        throw DataError("splits file: unrecognized header in " + path);
    }
    std::getline(in, line);
    std::map<std::string, segments::Split> m;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto cols = split_line(line, '\t');
        if (cols.size() != 2) throw DataError("splits file: bad row: " + line);
        if (cols[1] == "train") m[cols[0]] = segments::Split::Train;
        else if (cols[1] == "validation") m[cols[0]] = segments::Split::Validation;
        else if (cols[1] == "test") m[cols[0]] = segments::Split::Test;
        else throw DataError("splits file: unknown split " + cols[1]);
    }
    return m;
}

// --- shared stage plumbing ----------------------------------------------------

struct LoadedData {
    segments::SegmentSet set;
    std::map<std::string, segments::Split> splits;
    std::map<std::int64_t, matching::MatchResult> matches;
    population::TwinPopulation pop;
};

LoadedData load_matched_data(const RunConfig& cfg) {
    const std::string d = cfg.data_dir();
    require_file(d + "/segments/segments.tsv", "extract");
    require_file(d + "/segments/splits.tsv", "extract");
    require_file(d + "/match/match.tsv", "match");
    require_file(d + "/population/population.tsv", "population");
    LoadedData data;
    data.set = segments::load_segments(d + "/segments");
    data.splits = load_splits(d + "/segments/splits.tsv");
    data.matches = matching::load_match_results(d + "/match");
    data.pop = population::load_population(d + "/population/population.tsv");
    return data;
}

struct AssembledSegment {
    const segments::Segment* seg = nullptr;
    segments::TensorTriple tensors;
    std::vector<double> iob_hist; // 37, normalized
    std::vector<double> iob_fut;  // 48, normalized
    int twin_id = 0;
};

/// Matched segments of one split with tensors and IOB series built.
std::vector<AssembledSegment> assemble_split(const LoadedData& data,
                                             segments::Split which) {
    std::vector<AssembledSegment> out;
    for (const auto& seg : data.set.segments) {
        const auto sit = data.splits.find(seg.patient_id);
        if (sit == data.splits.end()) {
            throw DataError("no split assignment for patient " + seg.patient_id);
        }
        if (sit->second != which) continue;
        const auto mit = data.matches.find(seg.id);
        if (mit == data.matches.end() || mit->second.failed()) continue;

        const auto& events = data.set.events_for(seg);
        std::vector<double> hist_grid(segments::kHistoryLen);
        for (int k = 0; k < segments::kHistoryLen; ++k) hist_grid[k] = seg.history_time(k);
        std::vector<double> fut_grid(segments::kHorizon);
        for (int i = 0; i < segments::kHorizon; ++i) fut_grid[i] = seg.future_time(i);

        AssembledSegment a;
        a.seg = &seg;
        a.iob_hist = iob::iob_series(events, hist_grid, seg.decision_time);
        a.iob_fut = iob::iob_series(events, fut_grid, seg.decision_time);
        a.twin_id = mit->second.twin_id;
        a.tensors = segments::build_tensors(seg, mit->second.x_hist, mit->second.x_fut,
                                            a.iob_hist, a.iob_fut);
        out.push_back(std::move(a));
    }
    return out;
}

std::vector<std::string> model_list(const RunConfig& cfg) {
    auto names = split_line(cfg.get_str("models"), ',');
    if (names.empty()) throw ConfigError("config: models list is empty");
    return names;
}

/// Deterministic subsample: seeded shuffle, keep the first limit entries.
template <typename T>
void subsample(std::vector<T>& v, std::int64_t limit, std::uint64_t seed) {
    if (limit <= 0 || static_cast<std::int64_t>(v.size()) <= limit) return;
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    Rng rng(seed);
    rng.shuffle(idx);
    idx.resize(static_cast<std::size_t>(limit));
    std::sort(idx.begin(), idx.end());
    std::vector<T> kept;
    kept.reserve(idx.size());
    for (const auto i : idx) kept.push_back(std::move(v[i]));
    v = std::move(kept);
}

neural::TrainingConfig training_config(const RunConfig& cfg) {
    neural::TrainingConfig tc;
    tc.lr0 = cfg.get_num("train.lr0");
    tc.batch = static_cast<int>(cfg.get_int("train.batch"));
    tc.max_epochs = static_cast<int>(cfg.get_int("train.epochs"));
    tc.patience = static_cast<int>(cfg.get_int("train.patience"));
    tc.lr_factor = cfg.get_num("train.lr_factor");
    tc.lr_patience = static_cast<int>(cfg.get_int("train.lr_patience"));
    tc.lr_min = cfg.get_num("train.lr_min");
    tc.dropout_p = cfg.get_num("train.dropout");
    tc.huber_delta = cfg.get_num("train.huber_delta");
    tc.seed = static_cast<std::uint64_t>(cfg.get_int("train.seed"));
    tc.parallel = parallel_enabled(cfg);
    return tc;
}

} // namespace

void stage_synth(const RunConfig& cfg) {
    apply_threads(cfg);
    const std::string dir = cfg.data_dir() + "/cohort";

    synth::CohortSpec spec;
    spec.n_patients = static_cast<int>(cfg.get_int("cohort.patients"));
    spec.days = static_cast<int>(cfg.get_int("cohort.days"));
    spec.seed = static_cast<std::uint64_t>(cfg.get_int("cohort.seed"));
    spec.meals_per_day = cfg.get_num("cohort.meals_per_day");
    spec.carbs_mean_g = cfg.get_num("cohort.carbs_mean");
    spec.carbs_sd_g = cfg.get_num("cohort.carbs_sd");
    spec.carb_ratio_lo = cfg.get_num("cohort.carb_ratio_lo");
    spec.carb_ratio_hi = cfg.get_num("cohort.carb_ratio_hi");
    spec.basal_lo_uhr = cfg.get_num("cohort.basal_lo");
    spec.basal_hi_uhr = cfg.get_num("cohort.basal_hi");
    spec.cgm_noise_sd = cfg.get_num("cohort.noise_sd");
    spec.dropout_rate = cfg.get_num("cohort.dropout");

    const auto gen_pop = population::generate_population(
        static_cast<std::uint64_t>(cfg.get_int("cohort.population_seed")),
        static_cast<int>(cfg.get_int("population.size")));
    const auto cohort = synth::generate_cohort(spec, gen_pop);

    fs::create_directories(dir);
    segments::save_cgm(cohort.records, dir + "/cgm.tsv");
    segments::save_insulin(cohort.records, dir + "/insulin.tsv");
    synth::save_truth(cohort.true_twin, dir + "/truth.tsv");
    population::save_population(gen_pop, dir + "/generating_population.tsv");
    if (!cohort.log.empty()) {
        std::ostringstream log;
        for (const auto& line : cohort.log) log << line << '\n';
        write_text_file(dir + "/generation.log", log.str());
    }
    write_provenance(cfg, dir, {});
}

void stage_population(const RunConfig& cfg) {
    const std::string dir = cfg.data_dir() + "/population";
    const auto pop = population::generate_population(
        static_cast<std::uint64_t>(cfg.get_int("population.seed")),
        static_cast<int>(cfg.get_int("population.size")));
    fs::create_directories(dir);
    population::save_population(pop, dir + "/population.tsv");
    write_provenance(cfg, dir, {});
}

void stage_extract(const RunConfig& cfg) {
    apply_threads(cfg);
    const std::string d = cfg.data_dir();
    require_file(d + "/cohort/cgm.tsv", "synth");
    require_file(d + "/cohort/insulin.tsv", "synth");

    const auto records =
        segments::load_records(d + "/cohort/cgm.tsv", d + "/cohort/insulin.tsv");
    segments::ExtractionStats stats;
    const auto set =
        segments::extract_all(records, cfg.get_num("extract.stride_min"), &stats);

    std::vector<std::string> ids;
    ids.reserve(records.size());
    for (const auto& r : records) ids.push_back(r.patient_id);
    const auto splits = segments::split_patients(
        ids, static_cast<std::uint64_t>(cfg.get_int("extract.split_seed")));

    const std::string dir = d + "/segments";
    segments::save_segments(set, dir);
    save_splits(splits, dir + "/splits.tsv");

    std::ostringstream st;
    st << "candidates\t" << stats.candidates << '\n';
    st << "accepted\t" << stats.accepted << '\n';
    for (int c = 1; c <= 6; ++c) {
        st << "rejected_" << segments::qc_name(static_cast<segments::QcCriterion>(c))
           << '\t' << stats.rejected_by[static_cast<std::size_t>(c)] << '\n';
    }
    write_text_file(dir + "/stats.tsv", st.str());
    write_provenance(cfg, dir, {d + "/cohort/cgm.tsv", d + "/cohort/insulin.tsv"});
}

void stage_match(const RunConfig& cfg) {
    apply_threads(cfg);
    const std::string d = cfg.data_dir();
    require_file(d + "/segments/segments.tsv", "extract");
    require_file(d + "/population/population.tsv", "population");

    const auto set = segments::load_segments(d + "/segments");
    const auto pop = population::load_population(d + "/population/population.tsv");
    matching::MatchingConfig mcfg;
    const auto results = matching::match_all(set, pop, mcfg, parallel_enabled(cfg));

    const std::string dir = d + "/match";
    fs::create_directories(dir);
    matching::save_match_results(results, dir);
    write_provenance(cfg, dir,
                     {d + "/segments/segments.tsv", d + "/population/population.tsv"});
}

void stage_train(const RunConfig& cfg) {
    apply_threads(cfg);
    const auto data = load_matched_data(cfg);
    auto train_asm = assemble_split(data, segments::Split::Train);
    auto val_asm = assemble_split(data, segments::Split::Validation);
    if (train_asm.empty() || val_asm.empty()) {
        throw DataError("train: no matched segments in train/validation splits");
    }
    const auto tc = training_config(cfg);
    subsample(train_asm, cfg.get_int("train.max_train_segments"), tc.seed ^ 0xA5A5A5A5ULL);
    subsample(val_asm, cfg.get_int("train.max_val_segments"), tc.seed ^ 0x5A5A5A5AULL);

    const std::string dir = cfg.data_dir() + "/models";
    fs::create_directories(dir);
    const int d_hidden = static_cast<int>(cfg.get_int("train.hidden"));

    for (const auto& name : model_list(cfg)) {
        if (name == "naive" || name == "digital_twin") continue;
        if (name == "recursive") {
            std::vector<baselines::RecursiveSample> tr, va;
            for (const auto& a : train_asm) {
                tr.push_back(baselines::make_recursive_sample(*a.seg, a.iob_hist, a.iob_fut));
            }
            for (const auto& a : val_asm) {
                va.push_back(baselines::make_recursive_sample(*a.seg, a.iob_hist, a.iob_fut));
            }
            Rng init_rng(tc.seed ^ fnv1a(name));
            auto params = baselines::init_recursive(
                static_cast<int>(cfg.get_int("train.recursive_hidden")), init_rng);
            auto rc = tc;
            if (const auto e = cfg.get_int("train.recursive_epochs"); e > 0) {
                rc.max_epochs = static_cast<int>(e);
            }
            rc.input_noise_sd = cfg.get_num("train.recursive_input_noise");
            rc.recursive_rollout = cfg.get_int("train.recursive_rollout") != 0;
            const auto result = baselines::train_recursive(params, tr, va, rc);
            if (result.aborted_non_finite) {
                throw NumericError("train: recursive model diverged (non-finite loss)");
            }
            baselines::save_recursive(result.params, dir + "/" + name + ".model");
            neural::save_training_log(result.log, dir + "/" + name + ".log.tsv");
            continue;
        }
        const auto variant = baselines::variant_from_name(name);
        std::vector<neural::Sample> tr, va;
        for (const auto& a : train_asm) tr.push_back(baselines::make_sample(a.tensors, variant));
        for (const auto& a : val_asm) va.push_back(baselines::make_sample(a.tensors, variant));
        Rng init_rng(tc.seed ^ fnv1a(name));
        const auto initial = neural::init_seq2seq(baselines::encoder_width(variant),
                                                  baselines::decoder_width(variant),
                                                  d_hidden, init_rng);
        const auto result = neural::train(initial, tr, va, tc);
        if (result.aborted_non_finite) {
            throw NumericError("train: " + name + " diverged (non-finite loss)");
        }
        neural::save_seq2seq(result.params, name, dir + "/" + name + ".model");
        neural::save_training_log(result.log, dir + "/" + name + ".log.tsv");
    }
    write_provenance(cfg, dir,
                     {cfg.data_dir() + "/segments/segments.tsv",
                      cfg.data_dir() + "/match/match.tsv"});
}

void stage_forecast(const RunConfig& cfg) {
    apply_threads(cfg);
    const auto data = load_matched_data(cfg);
    const auto test_asm = assemble_split(data, segments::Split::Test);
    if (test_asm.empty()) throw DataError("forecast: no matched segments in test split");

    const std::string models_dir = cfg.data_dir() + "/models";
    const std::string dir = cfg.data_dir() + "/forecasts";
    fs::create_directories(dir);

    std::vector<std::string> inputs = {cfg.data_dir() + "/match/match.tsv"};
    for (const auto& name : model_list(cfg)) {
        baselines::PredictionMap preds;
        if (name == "naive") {
            for (const auto& a : test_asm) preds[a.seg->id] = baselines::naive_forecast(*a.seg);
        } else if (name == "digital_twin") {
            for (const auto& a : test_asm) {
                const auto& twin = data.pop.twins.at(static_cast<std::size_t>(a.twin_id - 1));
                preds[a.seg->id] = baselines::twin_forecast(
                    data.matches.at(a.seg->id).x_fut, twin.params);
            }
        } else if (name == "recursive") {
            const std::string path = models_dir + "/" + name + ".model";
            require_file(path, "train");
            inputs.push_back(path);
            const auto params = baselines::load_recursive(path);
            for (const auto& a : test_asm) {
                preds[a.seg->id] = baselines::recursive_forecast(
                    params, baselines::make_recursive_sample(*a.seg, a.iob_hist, a.iob_fut));
            }
        } else {
            const auto variant = baselines::variant_from_name(name);
            const std::string path = models_dir + "/" + name + ".model";
            require_file(path, "train");
            inputs.push_back(path);
            const auto params = neural::load_seq2seq(path);
            for (const auto& a : test_asm) {
                const auto s = baselines::make_sample(a.tensors, variant);
                preds[a.seg->id] = neural::predict_mgdl(params, s.enc, s.dec);
            }
        }
        baselines::save_predictions(preds, dir + "/" + name + ".tsv");
    }
    write_provenance(cfg, dir, inputs);
}

void stage_evaluate(const RunConfig& cfg) {
    apply_threads(cfg);
    const std::string d = cfg.data_dir();
    require_file(d + "/segments/segments.tsv", "extract");
    const auto set = segments::load_segments(d + "/segments");
    const auto actuals = evaluation::actuals_from_segments(set.segments);

    std::map<std::string, baselines::PredictionMap> preds;
    std::vector<std::string> inputs;
    for (const auto& name : model_list(cfg)) {
        const std::string path = d + "/forecasts/" + name + ".tsv";
        require_file(path, "forecast");
        preds[name] = baselines::load_predictions(path);
        inputs.push_back(path);
    }
    const auto report = evaluation::build_report(
        preds, actuals, static_cast<int>(cfg.get_int("evaluate.worst_k")));
    evaluation::emit_report(report, d + "/report");
    write_provenance(cfg, d + "/report", inputs);
}

void run_pipeline(const RunConfig& cfg, const std::vector<std::string>& stages) {
    std::vector<std::string> todo = stages;
    if (todo.empty()) todo.assign(std::begin(kStageOrder), std::end(kStageOrder));
    for (const auto& s : todo) {
        if (std::find(std::begin(kStageOrder), std::end(kStageOrder), s) ==
            std::end(kStageOrder)) {
            throw ConfigError("unknown stage: " + s);
        }
    }
    // fail on a misspelled model before any stage burns time
    static const char* const kKnownModels[] = {
        "naive",        "digital_twin",      "recursive",
        "seq2seq_full", "seq2seq_minus_ode", "seq2seq_minus_iob"};
    for (const auto& name : model_list(cfg)) {
        if (std::find(std::begin(kKnownModels), std::end(kKnownModels), name) ==
            std::end(kKnownModels)) {
            throw ConfigError("unknown model: " + name);
        }
    }
    // dependency order regardless of the order given
    for (const char* stage : kStageOrder) {
        if (std::find(todo.begin(), todo.end(), stage) == todo.end()) continue;
        if (std::string(stage) == "synth") stage_synth(cfg);
        else if (std::string(stage) == "population") stage_population(cfg);
        else if (std::string(stage) == "extract") stage_extract(cfg);
        else if (std::string(stage) == "match") stage_match(cfg);
        else if (std::string(stage) == "train") stage_train(cfg);
        else if (std::string(stage) == "forecast") stage_forecast(cfg);
        else if (std::string(stage) == "evaluate") stage_evaluate(cfg);
    }
}

} // namespace glyforge::pipeline
