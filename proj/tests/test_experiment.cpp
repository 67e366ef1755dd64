#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "besovlab/experiment.hpp"

using namespace besovlab;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("besovlab_test_" + name);
  fs::remove_all(p);
  fs::remove_all(p.string() + ".partial");
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(slurp(p));
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> r;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) r.push_back(cell);
    rows.push_back(r);
  }
  return rows;
}

nlohmann::json small_spde(bool noise) {
  nlohmann::json j = {{"domain", "lshape"},
                      {"grid", {{"J", 6}, {"wavelet", "spline-2.2"}}},
                      {"time", {{"T", 0.05}, {"steps", 8}}},
                      {"snapshots", {4, 8}}};
  if (noise) j["noise"] = {{"a", 2.5}, {"b", 0.0}, {"j0", 3}, {"mode", "dense"}};
  else j["noise"] = {{"enabled", false}};
  return j;
}

Experiment make(const nlohmann::json& j, const fs::path& out) {
  Experiment e = experiment_from_json(j);
  e.out = out;
  return e;
}

}  // namespace

TEST(Aggregate, SinglePathHasZeroStderr) {
  const auto a = aggregate({{1.5, -2.0, 3.25}});
  EXPECT_EQ(a.paths, 1u);
  EXPECT_EQ(a.mean, (std::vector<double>{1.5, -2.0, 3.25}));
  EXPECT_EQ(a.stderr_, (std::vector<double>{0.0, 0.0, 0.0}));
}

TEST(Aggregate, IdenticalPathsGiveExactlyZeroStderr) {
  const std::vector<double> row{0.1, 1.0 / 3.0, 12345.678, 1e-17};
  const auto a = aggregate(std::vector<std::vector<double>>(37, row));
  for (std::size_t i = 0; i < row.size(); ++i) {
    EXPECT_EQ(a.mean[i], row[i]);
    EXPECT_EQ(a.stderr_[i], 0.0);
  }
}

TEST(Aggregate, IidUnitVarianceStandardError) {
  constexpr std::size_t K = 64, width = 16;
  std::vector<std::vector<double>> paths(K, std::vector<double>(width));
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t c = 0; c < width; ++c) paths[k][c] = rng::normal(99, rng::Stream::path, k, c);
  const auto a = aggregate(paths);
  for (std::size_t c = 0; c < width; ++c) {
    EXPECT_NEAR(a.stderr_[c], 0.125, 0.3 * 0.125) << "component " << c;
    EXPECT_LT(std::abs(a.mean[c]), 4 * 0.125);
  }
}

TEST(Aggregate, PowerMeanAndDeltaMethod) {
  const auto a = aggregate_scalar({1.0, 2.0, 3.0}, 2.0);
  EXPECT_NEAR(a.mean[0], std::sqrt(14.0 / 3.0), 1e-15);
  // sample variance of {1, 4, 9} is 16.333.., se of its mean sqrt(16.333/3)
  const double se_m = std::sqrt(49.0 / 3.0 / 3.0);
  EXPECT_NEAR(a.stderr_[0], se_m / (2.0 * std::sqrt(14.0 / 3.0)), 1e-14);
  EXPECT_EQ(a.tau, 2.0);
}

TEST(Aggregate, RejectsEmptyAndRaggedInput) {
  EXPECT_THROW(aggregate({}), std::invalid_argument);
  EXPECT_THROW(aggregate({{1.0, 2.0}, {1.0}}), std::invalid_argument);
  EXPECT_THROW(aggregate_scalar({1.0}, -1.0), std::invalid_argument);
}

TEST(ParallelFor, VisitsEveryIndexOnceAndRethrowsInIndexOrder) {
  std::vector<int> hits(100, 0);
  parallel_for(hits.size(), 8, [&](std::size_t i) { hits[i] += 1; });
  EXPECT_EQ(std::count(hits.begin(), hits.end(), 1), 100);
  try {
    parallel_for(50, 4, [](std::size_t i) {
      if (i == 17 || i == 31) throw std::runtime_error(std::to_string(i));
    });
    FAIL() << "expected an exception";
  } catch (const std::runtime_error& e) {
    EXPECT_STREQ(e.what(), "17");
  }
  parallel_for(0, 4, [](std::size_t) { FAIL(); });
}

TEST(Io, Sha256KnownVectorsAndCsvPrecision) {
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  EXPECT_EQ(sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, 1.0})
    EXPECT_EQ(std::stod(format_double(v)), v);
  Csv csv({"a", "b", "c"});
  csv.row(1, 0.5, "x");
  EXPECT_EQ(csv.str(), "a,b,c\n1,0.5,x\n");
  EXPECT_THROW(csv.row(1, 2), std::logic_error);
}

TEST(OutputDirTest, RefusesForeignDirectoryAndReplacesEarlierRun) {
  const auto dir = scratch("outdir");
  fs::create_directories(dir);
  std::ofstream(dir / "precious.txt") << "keep";
  EXPECT_THROW(OutputDir{dir}, std::runtime_error);
  EXPECT_TRUE(fs::exists(dir / "precious.txt"));
  fs::remove_all(dir);
  {
    OutputDir o(dir);
    o.write("a.txt", "one");
    o.commit({{"run", 1}});
  }
  {
    OutputDir o(dir);
    o.write("b.txt", "two");
    EXPECT_TRUE(fs::exists(dir / "a.txt"));  // untouched until commit
    o.commit({{"run", 2}});
  }
  EXPECT_FALSE(fs::exists(dir / "a.txt"));
  EXPECT_EQ(slurp(dir / "b.txt"), "two");
  EXPECT_FALSE(fs::exists(dir.string() + ".partial"));
  {
    OutputDir o(dir);
    o.write("c.txt", "abandoned");
  }
  EXPECT_FALSE(fs::exists(dir / "c.txt"));
  EXPECT_FALSE(fs::exists(dir.string() + ".partial"));
}

TEST(Config, UnknownKindAndFieldPreciseErrors) {
  EXPECT_THROW(experiment_from_json({{"kind", "bogus"}}), std::invalid_argument);
  EXPECT_THROW(experiment_from_json({{"kind", "simulate"}, {"paths", 0}}), std::invalid_argument);
  auto expect_message = [](const nlohmann::json& j, const std::string& needle) {
    try {
      (void)parse_payload(experiment_from_json(j));
      ADD_FAILURE() << "accepted " << j.dump();
    } catch (const std::invalid_argument& e) {
      EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
    }
  };
  expect_message({{"kind", "approx-rates"}, {"source", {{"function", "singular"}}}, {"approx", {{"bogus", 1}}}},
                 "approx: unknown key 'bogus'");
  expect_message({{"kind", "approx-rates"}, {"source", {{"function", "nope"}}}}, "source");
  expect_message({{"kind", "regularity"}, {"source", {{"function", "bump"}, {"J", 8}}}, {"regularity", {{"j0", 3}}}},
                 "regularity");
  expect_message({{"kind", "simulate"}, {"spde", small_spde(true)}, {"tau", -1.0}}, "tau");
  expect_message({{"kind", "simulate"}}, "spde");
  expect_message({{"kind", "noise-check"}, {"isometry", {{"samples", 1}}}}, "isometry");
  expect_message({{"kind", "norm-equivalence"}, {"params", {{{"s", 5.0}, {"p", 2}, {"q", 2}, {"n", 6}}}}},
                 "vanishing moments");
  expect_message({{"kind", "approx-rates"}, {"source", {{"function", "singular"}, {"J", 6}}},
                  {"approx", {{"N", {16, 32, 64}}}}},
                 "fit window");
}

TEST(Experiments, NoiseFreeSimulationStaysZeroAndManifestHashesMatch) {
  const auto out = scratch("zero");
  const auto exp = make({{"kind", "simulate"}, {"paths", 3}, {"seed", 5}, {"spde", small_spde(false)}}, out);
  const auto res = run_experiment(exp);
  EXPECT_EQ(res.out, fs::absolute(out).lexically_normal());
  const auto rows = read_csv(out / "snapshots.csv");
  ASSERT_EQ(rows.size(), 3u);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    EXPECT_EQ(std::stod(rows[i][2]), 0.0);
    EXPECT_EQ(std::stod(rows[i][3]), 0.0);
    EXPECT_EQ(std::stod(rows[i][4]), 0.0);
  }
  const auto manifest = nlohmann::json::parse(slurp(out / "manifest.json"));
  EXPECT_EQ(manifest["kind"], "simulate");
  EXPECT_EQ(manifest["paths"], 3);
  EXPECT_EQ(manifest["seeds"]["paths"].size(), 3u);
  EXPECT_EQ(manifest["seeds"]["paths"][1], std::to_string(rng::derive_seed(5, 1)));
  EXPECT_FALSE(manifest.contains("threads"));
  std::size_t listed = 0;
  for (const auto& f : manifest["files"]) {
    const auto content = slurp(out / f["path"].get<std::string>());
    EXPECT_EQ(f["sha256"], sha256_hex(content)) << f["path"];
    EXPECT_EQ(f["bytes"], content.size());
    ++listed;
  }
  std::size_t on_disk = 0;
  for (const auto& e : fs::recursive_directory_iterator(out))
    if (e.is_regular_file() && e.path().filename() != "manifest.json") ++on_disk;
  EXPECT_EQ(listed, on_disk);
  EXPECT_TRUE(fs::exists(out / "paths" / "path_0002.csv"));
}

TEST(Experiments, ApproxRatesWritesBothSchemes) {
  const auto out = scratch("rates");
  const auto exp = make({{"kind", "approx-rates"},
                         {"source", {{"function", "singular"}, {"domain", "lshape"}, {"J", 7}}},
                         {"approx", {{"norm", "W12"}, {"j0", 3}, {"N", {{"lo", 16}, {"hi", 4096}}}}}},
                        out);
  const auto res = run_experiment(exp);
  const auto rows = read_csv(out / "approx_errors.csv");
  ASSERT_GE(rows.size(), 9u);
  EXPECT_EQ(rows[0], (std::vector<std::string>{"N", "best_mean", "best_stderr", "uniform_mean", "uniform_stderr"}));
  for (std::size_t i = 1; i < rows.size(); ++i) {
    EXPECT_GT(std::stod(rows[i][1]), 0.0);
    EXPECT_GT(std::stod(rows[i][3]), 0.0);
  }
  EXPECT_GT(res.summary["best_exponent"]["mean"].get<double>(), res.summary["uniform_exponent"]["mean"].get<double>());
  EXPECT_EQ(res.summary["paths"], 1);
}

TEST(Experiments, ThreadCountDoesNotChangeAnyOutputByte) {
  const nlohmann::json cfg = {{"kind", "simulate"},
                              {"paths", 6},
                              {"seed", 42},
                              {"spde", small_spde(true)},
                              {"approx", {{"norm", "W12"}, {"j0", 3}, {"N", {{"lo", 16}, {"hi", 4096}}}}}};
  const auto a = scratch("threads1"), b = scratch("threads8");
  auto e1 = make(cfg, a);
  e1.threads = 1;
  auto e8 = make(cfg, b);
  e8.threads = 8;
  run_experiment(e1);
  run_experiment(e8);
  std::size_t compared = 0;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), a);
    EXPECT_EQ(slurp(e.path()), slurp(b / rel)) << rel;
    ++compared;
  }
  EXPECT_GE(compared, 10u);
}

TEST(Experiments, NoiseCheckReportsSummabilityAndIsometry) {
  const auto out = scratch("noise");
  const auto res = run_experiment(make({{"kind", "noise-check"},
                                        {"seed", 3},
                                        {"noise", {{"a", 2.5}, {"j0", 3}}},
                                        {"isometry", {{"J", 5}, {"samples", 20000}}}},
                                       out));
  EXPECT_EQ(res.summary["summability"].size(), 2u);
  EXPECT_TRUE(res.summary["summability"][1]["converged"].get<bool>());
  EXPECT_LE(res.summary["isometry"]["max_abs_z"].get<double>(), 4.0);
  EXPECT_TRUE(fs::exists(out / "isometry.csv"));
}
