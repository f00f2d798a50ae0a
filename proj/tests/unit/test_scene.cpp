#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <string>

#include "sode/scene.hpp"

using namespace sode;

namespace {

const char* kHyperbolic = R"([scene]
name = hyperbolic
dim = 2
kind = finsler
chart = box(-10, 10; 0.001, 10)

[finsler]
L = "(y1^2 + y2^2)/x2^2"
)";

std::string error_of(const std::string& text) {
  try {
    parse_scene(text, "t.scene");
  } catch (const ValidationError& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST(Scene, HyperbolicFinsler) {
  Scene s = parse_scene(kHyperbolic);
  EXPECT_EQ(s.kind, SceneKind::Finsler);
  EXPECT_EQ(s.dim, 2u);
  EXPECT_EQ(s.name, "hyperbolic");
  ASSERT_TRUE(s.finsler.has_value());
  EXPECT_FALSE(s.sode.has_value());
  EXPECT_EQ(s.domain, DomainKind::ZeroSectionExcluded);
  ASSERT_TRUE(s.chart.has_value());
  EXPECT_DOUBLE_EQ(s.chart->axes[1].lo, 0.001);
  EXPECT_DOUBLE_EQ(s.chart->axes[0].hi, 10.0);
  EXPECT_EQ(s.digest.size(), 16u);
}

TEST(Scene, FinslerWholeBundleOverride) {
  std::string text = kHyperbolic;
  text.insert(text.find("chart"), "exclude_zero_section = false\n");
  EXPECT_EQ(parse_scene(text).domain, DomainKind::WholeBundle);
}

TEST(Scene, SodeSprayAndOptions) {
  Scene s = parse_scene(R"SC([scene]
dim = 1
[sode]
S1 = "pi*(1 + y1^2)"   # trailing comment
[options]
atol = 1e-12
rtol = 1e-11
blowup = 1e6
seed = 7
)SC");
  EXPECT_EQ(s.kind, SceneKind::Sode);
  EXPECT_DOUBLE_EQ(s.options.atol, 1e-12);
  EXPECT_EQ(s.options.seed, 7u);
  FlowOptions f = s.flow_options();
  EXPECT_DOUBLE_EQ(f.rtol, 1e-11);
  EXPECT_DOUBLE_EQ(f.blowup, 1e6);
  Vec x{0.0}, y{1.0};
  EXPECT_NEAR(s.spray()(x, y)[0], 2.0 * M_PI, 1e-15);
}

TEST(Scene, ConnectionMissingEntriesAreZero) {
  Scene s = parse_scene(R"([scene]
dim = 2
kind = connection
[connection]
G_1_1 = "y2"
)");
  ASSERT_TRUE(s.connection.has_value());
  Vec x{0.0, 0.0}, y{1.0, 2.0};
  Vec spray = s.spray()(x, y);
  // S = Gamma(x, y) y with only Gamma^1_1 = y2 nonzero.
  EXPECT_DOUBLE_EQ(spray[0], 2.0);
  EXPECT_DOUBLE_EQ(spray[1], 0.0);
}

TEST(Scene, DimensionMismatch) {
  std::string e = error_of("[scene]\ndim = 2\n[sode]\nS1 = \"0\"\nS2 = \"0\"\nS3 = \"0\"\n");
  EXPECT_NE(e.find("dimension mismatch"), std::string::npos) << e;
  EXPECT_NE(e.find("t.scene:6:"), std::string::npos) << e;
}

TEST(Scene, TwoFieldSectionsRejected) {
  std::string e = error_of("[scene]\ndim = 1\n[sode]\nS1 = \"0\"\n[finsler]\nL = \"y1^2\"\n");
  EXPECT_FALSE(e.empty());
}

TEST(Scene, MissingSections) {
  EXPECT_FALSE(error_of("[sode]\nS1 = \"0\"\n").empty());
  EXPECT_FALSE(error_of("[scene]\ndim = 1\n").empty());
  EXPECT_FALSE(error_of("[scene]\ndim = 2\n[sode]\nS1 = \"0\"\n").empty());
  EXPECT_FALSE(error_of("[scene]\ndim = 1\n[finsler]\n").empty());
}

TEST(Scene, LineNumbersInErrors) {
  std::string e = error_of("[scene]\ndim = 1\n\n[sode]\nS1 = \"y1 +\"\n");
  EXPECT_NE(e.find("t.scene:5:"), std::string::npos) << e;
  e = error_of("[scene]\ndim = 1\ncolour = red\n[sode]\nS1 = \"0\"\n");
  EXPECT_NE(e.find("t.scene:3:"), std::string::npos) << e;
  try {
    parse_scene("[scene]\ndim = 1\n[sode]\nS1 = 0\n", "t.scene");
    FAIL();
  } catch (const SceneError& err) {
    EXPECT_EQ(err.line(), 4u);
  }
}

TEST(Scene, DuplicatesAndKindMismatch) {
  EXPECT_FALSE(error_of("[scene]\ndim = 1\ndim = 1\n[sode]\nS1 = \"0\"\n").empty());
  EXPECT_FALSE(error_of("[scene]\ndim = 1\n[sode]\nS1 = \"0\"\nS1 = \"1\"\n").empty());
  EXPECT_FALSE(error_of("[scene]\ndim = 1\nkind = finsler\n[sode]\nS1 = \"0\"\n").empty());
  EXPECT_FALSE(error_of("[scene]\ndim = 1\n[bogus]\n").empty());
}

TEST(Scene, BadChart) {
  EXPECT_FALSE(error_of("[scene]\ndim = 2\nchart = box(0, 1)\n[sode]\nS1 = \"0\"\nS2 = \"0\"\n").empty());
  EXPECT_FALSE(error_of("[scene]\ndim = 1\nchart = box(1, 0)\n[sode]\nS1 = \"0\"\n").empty());
}

TEST(Scene, DigestTracksText) {
  Scene a = parse_scene(kHyperbolic);
  Scene b = parse_scene(kHyperbolic);
  Scene c = parse_scene(std::string(kHyperbolic) + "# edit\n");
  EXPECT_EQ(a.digest, b.digest);
  EXPECT_NE(a.digest, c.digest);
}

TEST(Scene, LoadFromFile) {
  auto path = std::filesystem::temp_directory_path() / "sode_test_scene.scene";
  {
    std::ofstream f(path);
    f << kHyperbolic;
  }
  Scene s = load_scene(path);
  EXPECT_EQ(s.kind, SceneKind::Finsler);
  std::filesystem::remove(path);
  EXPECT_THROW(load_scene(path), Error);
}
