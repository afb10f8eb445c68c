#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "glyforge/hovorka.hpp"

namespace glyforge::population {

struct TwinEntry {
    int twin_id = 0; // 1-based, contiguous
    hovorka::TwinParameters params;
};

struct TwinPopulation {
    std::vector<TwinEntry> twins;
    std::uint64_t seed = 0;
    std::string version = "v1";
};

/// Deterministic population around the nominal parameter center: the three
/// insulin sensitivities are sampled log-uniformly over [0.2x, 5x] nominal,
/// everything else jittered +-10% uniformly.
TwinPopulation generate_population(std::uint64_t seed, int size = 300);

/// Line-delimited text format: a versioned comment header, a column header
/// naming twin_id plus all 16 parameters, then one row per twin at 17
/// significant digits.
void save_population(const TwinPopulation& pop, const std::string& path);
TwinPopulation load_population(const std::string& path);

} // namespace glyforge::population
