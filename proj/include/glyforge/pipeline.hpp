#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace glyforge::pipeline {

/// Flat key=value configuration with typed accessors. Every stage writes a
/// resolved snapshot of the keys it used next to its outputs.
struct RunConfig {
    std::map<std::string, std::string> values;

    static RunConfig defaults();
    static RunConfig from_file(const std::string& path);
    void apply_override(const std::string& key_eq_value);

    bool has(const std::string& key) const;
    const std::string& get_str(const std::string& key) const;
    double get_num(const std::string& key) const;
    std::int64_t get_int(const std::string& key) const;

    std::string data_dir() const; // "data_dir" key, GLYFORGE_DATA_DIR, or "./data"
    int threads() const;          // 0 = library default; 1 = bit-reproducible

    std::string snapshot() const; // sorted key=value dump
};

// Stage names in dependency order.
extern const char* const kStageOrder[7]; // synth, population, extract, match,
                                         // train, forecast, evaluate

void stage_synth(const RunConfig& cfg);
void stage_population(const RunConfig& cfg);
void stage_extract(const RunConfig& cfg);
void stage_match(const RunConfig& cfg);
void stage_train(const RunConfig& cfg);
void stage_forecast(const RunConfig& cfg);
void stage_evaluate(const RunConfig& cfg);

/// Run the named stages (dependency order enforced); empty list = all.
void run_pipeline(const RunConfig& cfg, const std::vector<std::string>& stages);

/// Write config.resolved.txt plus manifest.txt (FNV-1a of each input file)
/// into the stage's output directory.
void write_provenance(const RunConfig& cfg, const std::string& out_dir,
                      const std::vector<std::string>& input_paths);

} // namespace glyforge::pipeline
