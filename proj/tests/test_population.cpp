#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>

#include "glyforge/common.hpp"
#include "glyforge/population.hpp"

using namespace glyforge;
using namespace glyforge::population;

namespace {

std::string temp_path(const char* name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

} // namespace

TEST_CASE("same seed regenerates an identical population") {
    const TwinPopulation a = generate_population(2024, 50);
    const TwinPopulation b = generate_population(2024, 50);
    REQUIRE(a.twins.size() == b.twins.size());
    for (std::size_t i = 0; i < a.twins.size(); ++i) {
        CHECK(a.twins[i].twin_id == b.twins[i].twin_id);
        CHECK(a.twins[i].params.S_F1 == b.twins[i].params.S_F1);
        CHECK(a.twins[i].params.V_G == b.twins[i].params.V_G);
        CHECK(a.twins[i].params.BW == b.twins[i].params.BW);
    }
    const TwinPopulation c = generate_population(2025, 50);
    CHECK(a.twins[0].params.S_F1 != c.twins[0].params.S_F1);
}

TEST_CASE("default size is 300 with contiguous ids and valid parameters") {
    const TwinPopulation pop = generate_population(42);
    REQUIRE(pop.twins.size() == 300);
    for (std::size_t i = 0; i < pop.twins.size(); ++i) {
        CHECK(pop.twins[i].twin_id == static_cast<int>(i) + 1);
        CHECK_NOTHROW(pop.twins[i].params.validate());
    }
}

TEST_CASE("insulin sensitivities are all distinct") {
    const TwinPopulation pop = generate_population(42, 300);
    std::set<double> sf1;
    for (const auto& t : pop.twins) sf1.insert(t.params.S_F1);
    CHECK(sf1.size() == 300);
    // distinctness holds even at coarse resolution
    auto it = sf1.begin();
    double prev = *it++;
    for (; it != sf1.end(); ++it) {
        CHECK(*it - prev > 1e-12);
        prev = *it;
    }
}

TEST_CASE("sensitivity sweep spans the intended range around nominal") {
    const TwinPopulation pop = generate_population(42, 300);
    const double nominal_sf1 = hovorka::nominal_parameters().S_F1;
    double lo = 1e300, hi = 0.0;
    for (const auto& t : pop.twins) {
        CHECK(t.params.S_F1 >= 0.2 * nominal_sf1);
        CHECK(t.params.S_F1 <= 5.0 * nominal_sf1);
        lo = std::min(lo, t.params.S_F1);
        hi = std::max(hi, t.params.S_F1);
    }
    CHECK(hi / lo > 5.0); // the sweep actually uses its width
}

TEST_CASE("non-sensitivity parameters stay within +-10% of nominal") {
    const TwinPopulation pop = generate_population(7, 100);
    const auto nom = hovorka::nominal_parameters();
    for (const auto& t : pop.twins) {
        CHECK(t.params.V_G >= 0.9 * nom.V_G);
        CHECK(t.params.V_G <= 1.1 * nom.V_G);
        CHECK(t.params.k_e >= 0.9 * nom.k_e);
        CHECK(t.params.k_e <= 1.1 * nom.k_e);
        CHECK(t.params.BW >= 0.9 * nom.BW);
        CHECK(t.params.BW <= 1.1 * nom.BW);
    }
}

TEST_CASE("every twin stays in CGM range over a 3-hour quiet simulation") {
    const TwinPopulation pop = generate_population(42, 300);
    const std::vector<hovorka::ControlInput> inputs(36, {0.0, 0.0});
    for (const auto& t : pop.twins) {
        const auto x0 = hovorka::steady_state_init(120.0, 0.0, 0.0, t.params);
        const auto traj = hovorka::simulate(x0, t.params, inputs);
        for (const double g : traj.cgm) {
            CHECK(g >= 40.0);
            CHECK(g <= 400.0);
        }
    }
}

TEST_CASE("save/load round trip is exact") {
    const TwinPopulation pop = generate_population(99, 25);
    const std::string path = temp_path("glyforge_pop_roundtrip.tsv");
    save_population(pop, path);
    const TwinPopulation back = load_population(path);
    CHECK(back.seed == pop.seed);
    REQUIRE(back.twins.size() == pop.twins.size());
    for (std::size_t i = 0; i < pop.twins.size(); ++i) {
        CHECK(back.twins[i].twin_id == pop.twins[i].twin_id);
        CHECK(back.twins[i].params.f_c01 == pop.twins[i].params.f_c01);
        CHECK(back.twins[i].params.S_F1 == pop.twins[i].params.S_F1);
        CHECK(back.twins[i].params.S_F3 == pop.twins[i].params.S_F3);
        CHECK(back.twins[i].params.BW == pop.twins[i].params.BW);
    }
    std::filesystem::remove(path);
}

TEST_CASE("truncated file reports the offending line") {
    const TwinPopulation pop = generate_population(1, 10);
    const std::string path = temp_path("glyforge_pop_trunc.tsv");
    save_population(pop, path);
    std::string text = read_text_file(path);
    text.resize(text.size() * 2 / 3); // cut mid-row
    write_text_file(path, text);
    try {
        load_population(path);
        FAIL("expected DataError");
    } catch (const DataError& e) {
        // the message must carry a line number
        CHECK(std::string(e.what()).find(":") != std::string::npos);
    }
    std::filesystem::remove(path);
}

TEST_CASE("missing column is named in the error") {
    const TwinPopulation pop = generate_population(1, 3);
    const std::string path = temp_path("glyforge_pop_col.tsv");
    save_population(pop, path);
    std::string text = read_text_file(path);
    const auto pos = text.find("S_F1");
    REQUIRE(pos != std::string::npos);
    text.replace(pos, 4, "Z_Z1");
    write_text_file(path, text);
    try {
        load_population(path);
        FAIL("expected DataError");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("S_F1") != std::string::npos);
    }
    std::filesystem::remove(path);
}

TEST_CASE("version mismatch is rejected") {
    const TwinPopulation pop = generate_population(1, 3);
    const std::string path = temp_path("glyforge_pop_ver.tsv");
    save_population(pop, path);
    std::string text = read_text_file(path);
    const auto pos = text.find("v1");
    REQUIRE(pos != std::string::npos);
    text.replace(pos, 2, "v9");
    write_text_file(path, text);
    CHECK_THROWS_AS(load_population(path), DataError);
    std::filesystem::remove(path);
}
