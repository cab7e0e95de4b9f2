#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "sorex/config.hpp"

namespace fs = std::filesystem;
using namespace sorex;

TEST(Config, DefaultsMatchPublishedSetup) {
  RunConfig c;
  EXPECT_EQ(c.model.tower.d, 64);
  EXPECT_EQ(c.model.egopath.k, 2);
  EXPECT_EQ(c.model.egopath.n_w, 100);
  EXPECT_EQ(c.train.batch_size, 512);
  EXPECT_DOUBLE_EQ(c.train.gamma, 0.5);
  EXPECT_DOUBLE_EQ(c.train.lambda, 0.001);
  EXPECT_DOUBLE_EQ(c.train.lr, 0.001);
  EXPECT_EQ(c.eval.passes, 5);
  EXPECT_EQ(c.threads, 1);
}

TEST(Config, LoadOverridesAndRoundTrip) {
  const auto path = fs::temp_directory_path() / "sorex_cfg_test.ini";
  std::ofstream(path) << "# comment\n[model]\nd = 16\nreaggregation = false\n\n[egopath]\ntopk = 5\n"
                         "[run]\nseed = 9\n";
  RunConfig c;
  c.load(path);
  EXPECT_EQ(c.model.tower.d, 16);
  EXPECT_FALSE(c.model.reaggregation);
  EXPECT_EQ(c.model.egopath.topk, 5);
  EXPECT_EQ(c.seed, 9u);
  EXPECT_EQ(c.train.seed, 9u);
  EXPECT_NO_THROW(c.validate());

  std::ostringstream out;
  c.write(out);
  std::ofstream(path) << out.str();
  RunConfig d;
  d.load(path);
  EXPECT_EQ(d.entries(), c.entries());
  EXPECT_EQ(d.digest(), c.digest());
  fs::remove(path);
}

TEST(Config, DigestIgnoresRuntimeKeys) {
  RunConfig a;
  a.set("run.seed", "1");
  RunConfig b = a;
  b.set("run.threads", "8");
  b.set("run.out", "/elsewhere");
  b.set("eval.passes", "3");
  EXPECT_EQ(a.digest(), b.digest());
  b.set("train.gamma", "0");
  EXPECT_NE(a.digest(), b.digest());
}

TEST(Config, Errors) {
  RunConfig c;
  EXPECT_THROW(c.validate(), ConfigError);  // seed missing
  EXPECT_THROW(c.set("model.nope", "1"), ConfigError);
  EXPECT_THROW(c.set("model.d", "abc"), ConfigError);
  EXPECT_THROW(c.set("model.reaggregation", "maybe"), ConfigError);
  EXPECT_THROW(c.load("/nonexistent/file.ini"), ConfigError);
  c.set("run.seed", "3");
  c.set("eval.k", "0");
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Config, ThreadEnvironmentOverride) {
  RunConfig c;
  c.threads = 2;
  ::unsetenv("SOREX_THREADS");
  EXPECT_EQ(effective_threads(c), 2);
  ::setenv("SOREX_THREADS", "6", 1);
  EXPECT_EQ(effective_threads(c), 6);
  ::setenv("SOREX_THREADS", "0", 1);
  EXPECT_THROW(effective_threads(c), ConfigError);
  ::unsetenv("SOREX_THREADS");
}
