#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iterator>

#include <json.hpp>

#include "dhn/results.hpp"

using namespace dhn;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

}  // namespace

TEST(Results, WideToLongSkipsStepAndText) {
    auto rows = wide_to_long("step,time_h,a,status,b\n0,0.25,1.5,ok,2\n1,0.5,3,fail,-4e-3\n");
    ASSERT_EQ(rows.size(), 4u);
    EXPECT_EQ(rows[0].series, "a");
    EXPECT_DOUBLE_EQ(rows[0].time_h, 0.25);
    EXPECT_DOUBLE_EQ(rows[0].value, 1.5);
    EXPECT_EQ(rows[1].series, "b");
    EXPECT_DOUBLE_EQ(rows[3].value, -4e-3);
    EXPECT_DOUBLE_EQ(rows[3].time_h, 0.5);
    EXPECT_THROW(wide_to_long("step,a\n0,1\n"), std::runtime_error);
}

TEST(Results, ConfigHashIsStableAndSensitive) {
    Scenario a = build_aroma();
    EXPECT_EQ(config_hash(a), config_hash(build_aroma()));
    EXPECT_EQ(config_hash(a).size(), 16u);
    a.ocp.N = 20;
    EXPECT_NE(config_hash(a), config_hash(build_aroma()));
}

TEST(Results, BundleRoundTrip) {
    Scenario sc = build_aroma();
    ClosedLoopRecord rec = run_variant(sc, Variant::RBC, 3);
    fs::path root = fs::temp_directory_path() / "dhn_test_results";
    fs::remove_all(root);
    std::string dir = make_run_dir(root.string(), sc);
    EXPECT_NE(dir.find(config_hash(sc).substr(0, 12)), std::string::npos);
    write_bundle(dir, sc, rec);
    for (const char* f : {"metrics.json", "config.yaml", "states.csv", "inputs.csv", "loops.csv", "manifest.json"})
        EXPECT_TRUE(fs::exists(fs::path(dir) / f)) << f;

    auto metrics = nlohmann::json::parse(slurp(fs::path(dir) / "metrics.json"));
    EXPECT_NEAR(metrics["cost_eur"].get<double>(), rec.metrics.cost, 1e-9);
    EXPECT_EQ(metrics["variant"], "rbc");
    auto manifest = nlohmann::json::parse(slurp(fs::path(dir) / "manifest.json"));
    EXPECT_EQ(manifest["config_hash"], config_hash(sc));

    // the stored config reproduces the scenario
    Scenario back = scenario_from_yaml(slurp(fs::path(dir) / "config.yaml"));
    EXPECT_TRUE(scenarios_equal(back, sc));

    // states.csv: header plus one row per step, one temperature column per state
    std::ifstream states(fs::path(dir) / "states.csv");
    std::string header, line;
    std::getline(states, header);
    EXPECT_EQ(static_cast<std::size_t>(std::count(header.begin(), header.end(), ',')), 1 + rec.state_names.size());
    int rows = 0;
    while (std::getline(states, line)) ++rows;
    EXPECT_EQ(rows, 3);

    std::string plots = export_plots(dir);
    EXPECT_FALSE(wide_to_long(slurp(fs::path(dir) / "inputs.csv")).empty());
    std::string text = slurp(plots);
    EXPECT_EQ(text.rfind("time_h,series,value\n", 0), 0u);
    EXPECT_NE(text.find(",cost,"), std::string::npos);
    EXPECT_NE(text.find(",T_"), std::string::npos);
    fs::remove_all(root);
}

TEST(Results, ExportPlotsNeedsARunFolder) {
    EXPECT_THROW(export_plots("/nonexistent/run"), std::runtime_error);
}
