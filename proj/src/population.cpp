#include "glyforge/population.hpp"

#include <cstdlib>
#include <sstream>

#include "glyforge/common.hpp"

namespace glyforge::population {

namespace {

const char* const kColumns[] = {"twin_id", "f_c01", "V_G",  "k_12", "a_G",  "t_maxG",
                                "EGP_0",   "t_maxI", "k_e",  "V_I",  "k_a1", "k_a2",
                                "k_a3",    "S_F1",   "S_F2", "S_F3", "BW"};
constexpr int kNumColumns = 17;

std::vector<double*> param_fields(hovorka::TwinParameters& p) {
    return {&p.f_c01, &p.V_G,  &p.k_12, &p.a_G,  &p.t_maxG, &p.EGP_0, &p.t_maxI, &p.k_e,
            &p.V_I,   &p.k_a1, &p.k_a2, &p.k_a3, &p.S_F1,   &p.S_F2,  &p.S_F3,   &p.BW};
}

} // namespace

TwinPopulation generate_population(std::uint64_t seed, int size) {
    if (size < 1) throw ConfigError("generate_population: size must be >= 1");

    const hovorka::TwinParameters nominal = hovorka::nominal_parameters();
    Rng rng(seed);

    TwinPopulation pop;
    pop.seed = seed;
    pop.twins.reserve(size);
    for (int j = 1; j <= size; ++j) {
        hovorka::TwinParameters p = nominal;
        auto jitter = [&](double v) { return v * rng.uniform(0.9, 1.1); };
        p.f_c01 = jitter(nominal.f_c01);
        p.V_G = jitter(nominal.V_G);
        p.k_12 = jitter(nominal.k_12);
        p.a_G = jitter(nominal.a_G);
        p.t_maxG = jitter(nominal.t_maxG);
        p.EGP_0 = jitter(nominal.EGP_0);
        p.t_maxI = jitter(nominal.t_maxI);
        p.k_e = jitter(nominal.k_e);
        p.V_I = jitter(nominal.V_I);
        p.k_a1 = jitter(nominal.k_a1);
        p.k_a2 = jitter(nominal.k_a2);
        p.k_a3 = jitter(nominal.k_a3);
        p.S_F1 = rng.log_uniform(0.2 * nominal.S_F1, 5.0 * nominal.S_F1);
        p.S_F2 = rng.log_uniform(0.2 * nominal.S_F2, 5.0 * nominal.S_F2);
        p.S_F3 = rng.log_uniform(0.2 * nominal.S_F3, 5.0 * nominal.S_F3);
        p.BW = jitter(nominal.BW);
        p.validate();
        pop.twins.push_back({j, p});
    }
    return pop;
}

void save_population(const TwinPopulation& pop, const std::string& path) {
    std::ostringstream out;
    out << "# glyforge population " << pop.version << " seed=" << pop.seed << "\n";
    for (int c = 0; c < kNumColumns; ++c) {
        out << (c ? "\t" : "") << kColumns[c];
    }
    out << "\n";
    for (const TwinEntry& t : pop.twins) {
        hovorka::TwinParameters p = t.params;
        out << t.twin_id;
        for (double* f : param_fields(p)) out << "\t" << format_g17(*f);
        out << "\n";
    }
    write_text_file(path, out.str());
}

TwinPopulation load_population(const std::string& path) {
    std::istringstream in(read_text_file(path));
    std::string line;
    int lineno = 0;

    if (!std::getline(in, line)) throw DataError(path + ": empty population file");
    ++lineno;
    TwinPopulation pop;
    {
        std::istringstream hdr(line);
        std::string hash, project, name, version, seed_kv;
        hdr >> hash >> project >> name >> version >> seed_kv;
        if (hash != "#" || project != "glyforge" || name != "population" ||
            version != "v1") {
            throw DataError(path + ":1: unsupported population header or version: " + line);
        }
        pop.version = version;
        if (seed_kv.rfind("seed=", 0) == 0) {
            pop.seed = std::strtoull(seed_kv.c_str() + 5, nullptr, 10);
        }
    }

    if (!std::getline(in, line)) throw DataError(path + ":2: missing column header");
    ++lineno;
    const std::vector<std::string> cols = split_line(line, '\t');
    if (cols.size() != kNumColumns) {
        throw DataError(path + ":2: expected " + std::to_string(kNumColumns) + " columns");
    }
    for (int c = 0; c < kNumColumns; ++c) {
        if (cols[c] != kColumns[c]) {
            throw DataError(path + ":2: missing or misplaced column \"" +
                            std::string(kColumns[c]) + "\"");
        }
    }

    int expected_id = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const std::vector<std::string> f = split_line(line, '\t');
        if (f.size() != kNumColumns) {
            throw DataError(path + ":" + std::to_string(lineno) + ": truncated row");
        }
        TwinEntry t;
        t.twin_id = std::atoi(f[0].c_str());
        if (t.twin_id != expected_id) {
            throw DataError(path + ":" + std::to_string(lineno) +
                            ": twin_id not contiguous from 1");
        }
        auto fields = param_fields(t.params);
        for (int c = 1; c < kNumColumns; ++c) {
            char* end = nullptr;
            *fields[c - 1] = std::strtod(f[c].c_str(), &end);
            if (end == f[c].c_str()) {
                throw DataError(path + ":" + std::to_string(lineno) +
                                ": unparseable value in column " + kColumns[c]);
            }
        }
        t.params.validate();
        pop.twins.push_back(t);
        ++expected_id;
    }
    if (pop.twins.empty()) throw DataError(path + ": no twin rows");
    return pop;
}

} // namespace glyforge::population
