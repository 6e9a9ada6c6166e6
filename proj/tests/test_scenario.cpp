#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <iterator>

#include "dhn/scenario.hpp"

using namespace dhn;
namespace fs = std::filesystem;

namespace {

std::string source_path(const std::string& rel) { return std::string(DHN_SOURCE_DIR) + "/" + rel; }

fs::path temp_file(const std::string& name, const std::string& text) {
    fs::path dir = fs::temp_directory_path() / "dhn_test_scenario";
    fs::create_directories(dir);
    fs::path p = dir / name;
    std::ofstream(p) << text;
    return p;
}

}  // namespace

TEST(Series, PriceIsZeroOrderHeld) {
    TimeSeries s{{0.0, 1.0, 2.0}, {10.0, 20.0, 30.0}};
    auto v = resample(s, SeriesKind::Price, 900.0, 12);
    std::vector<double> want{10, 10, 10, 10, 20, 20, 20, 20, 30, 30, 30, 30};
    EXPECT_EQ(v, want);
}

TEST(Series, DemandIsLinearlyInterpolated) {
    TimeSeries s{{0.0, 1.0, 2.0}, {100.0, 200.0, 0.0}};
    auto v = resample(s, SeriesKind::Demand, 900.0, 9);
    std::vector<double> want{100, 125, 150, 175, 200, 150, 100, 50, 0};
    ASSERT_EQ(v.size(), want.size());
    for (std::size_t i = 0; i < v.size(); ++i) EXPECT_NEAR(v[i], want[i], 1e-12);
}

TEST(Series, ShortSeriesIsRejected) {
    TimeSeries s{{0.0, 1.0}, {1.0, 2.0}};
    EXPECT_THROW(resample(s, SeriesKind::Demand, 900.0, 6), ConfigError);
    EXPECT_THROW(resample(s, SeriesKind::Price, 900.0, 9), ConfigError);
    EXPECT_NO_THROW(resample(s, SeriesKind::Price, 900.0, 8));
}

TEST(Series, CsvErrorsNameTheLine) {
    auto bad = temp_file("bad.csv", "time,value\n0,1\n1,abc\n");
    try {
        read_series_csv(bad.string());
        FAIL() << "expected ConfigError";
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find(":3:"), std::string::npos) << e.what();
    }
    auto nan = temp_file("nan.csv", "time,value\n0,1\n1,nan\n");
    EXPECT_THROW(read_series_csv(nan.string()), ConfigError);
    auto order = temp_file("order.csv", "time,value\n0,1\n0,2\n");
    EXPECT_THROW(read_series_csv(order.string()), ConfigError);
    EXPECT_THROW(read_series_csv("/nonexistent/series.csv"), ConfigError);
}

TEST(Series, CheckedInProfilesMatchThePreset) {
    auto price = read_series_csv(source_path("data/price_eur_mwh.csv"));
    ASSERT_EQ(price.values.size(), 49u);
    for (int h = 0; h < 48; ++h)
        EXPECT_EQ(price.values[static_cast<std::size_t>(h)], aroma_hourly_price()[static_cast<std::size_t>(h % 24)]);
}

TEST(Scenario, ConfigFilesEqualThePresets) {
    EXPECT_TRUE(scenarios_equal(load_scenario(source_path("configs/aroma.yaml")), build_aroma()));
    EXPECT_TRUE(scenarios_equal(load_scenario(source_path("configs/aroma_relief.yaml")), build_aroma_relief()));
}

TEST(Scenario, YamlRoundTrip) {
    Scenario a = build_aroma_relief();
    a.ocp.R_diff = 0.25;
    a.ocp.complementarity = ComplementarityMode::Strict;
    a.rbc.a = 88.0;
    Scenario b = scenario_from_yaml(scenario_to_yaml(a));
    EXPECT_TRUE(scenarios_equal(a, b));
    EXPECT_EQ(scenario_to_yaml(a), scenario_to_yaml(b));
    EXPECT_EQ(fnv1a64(scenario_to_yaml(a)), fnv1a64(scenario_to_yaml(b)));
}

TEST(Scenario, FractionsAreRenormalized) {
    std::string text = scenario_to_yaml(build_aroma());
    auto pos = text.find("demand_fractions");
    ASSERT_NE(pos, std::string::npos);
    Scenario base = build_aroma();
    // double every fraction
    std::string doubled = "demand_fractions: {";
    bool first = true;
    for (const auto& [k, v] : base.demand_fractions) {
        doubled += (first ? "" : ", ") + k + ": " + std::to_string(2.0 * v);
        first = false;
    }
    doubled += "}\n";
    auto end = text.find('\n', pos);
    // the block may span several lines; cut until the next top-level key
    while (end + 1 < text.size() && text[end + 1] == ' ') end = text.find('\n', end + 1);
    text.replace(pos, end - pos + 1, doubled);
    Scenario s = scenario_from_yaml(text);
    double sum = 0.0;
    for (const auto& [k, v] : s.demand_fractions) {
        sum += v;
        EXPECT_NEAR(v, base.demand_fractions.at(k), 1e-6);
    }
    EXPECT_NEAR(sum, 1.0, 1e-12);
}

TEST(Scenario, UnknownKeysAreRejected) {
    std::string text = scenario_to_yaml(build_aroma()) + "bogus_key: 1\n";
    EXPECT_THROW(scenario_from_yaml(text), ConfigError);
    EXPECT_THROW(scenario_from_yaml("name: [unclosed"), ConfigError);
}

TEST(Scenario, ValveFreeOption) {
    std::ifstream in(source_path("configs/aroma.yaml"));
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const std::string base = source_path("configs");
    auto pos = text.find("preset: aroma");
    ASSERT_NE(pos, std::string::npos);
    std::string none = text;
    none.insert(pos + std::string("preset: aroma").size(), "\n  valves: none");
    Scenario s = scenario_from_yaml(none, base);
    for (const auto& e : s.network.edges) EXPECT_FALSE(e.has_valve);
    std::string bad = text;
    bad.insert(pos + std::string("preset: aroma").size(), "\n  valves: some");
    EXPECT_THROW(scenario_from_yaml(bad, base), ConfigError);
}

TEST(Scenario, ValidationCatchesBadFields) {
    Scenario s = build_aroma();
    s.tau = 0.0;
    EXPECT_THROW(s.validate(), ConfigError);
    s = build_aroma();
    s.pump_scale = -1.0;
    EXPECT_THROW(s.validate(), ConfigError);
    s = build_aroma();
    s.t_f = static_cast<int>(s.price.size());
    EXPECT_THROW(s.validate(), ConfigError);
    EXPECT_THROW(variant_from_string("xyz"), ConfigError);
    EXPECT_EQ(variant_from_string("MPS"), Variant::MPS);
}

TEST(Scenario, SurplusWindowRules) {
    Scenario s = build_aroma();
    ASSERT_TRUE(s.surplus.enabled);
    int noon = static_cast<int>(13.0 * 3600.0 / s.tau);
    int night = static_cast<int>(2.0 * 3600.0 / s.tau);
    EXPECT_EQ(s.demand_kW("C1", noon), 0.0);
    EXPECT_EQ(s.surplus_kW(noon), 100.0);
    EXPECT_EQ(s.surplus_kW(night), 0.0);
    EXPECT_NEAR(s.demand_kW("C4", noon), s.demand_fractions.at("C4") * s.total_demand_kW[noon] + 80.0, 1e-9);
    EXPECT_NEAR(s.demand_kW("C2", night), s.demand_fractions.at("C2") * s.total_demand_kW[night], 1e-9);
}
