#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "fracdev/io.hpp"

using namespace fracdev;

namespace {

std::string config(const std::string& name) {
  return std::string(FRACDEV_SOURCE_DIR) + "/configs/" + name;
}

void expect_same(const SelfSimilarSystem& a, const SelfSimilarSystem& b) {
  ASSERT_EQ(a.size(), b.size());
  ASSERT_EQ(a.dim(), b.dim());
  for (std::size_t j = 0; j < a.size(); ++j) {
    EXPECT_EQ(a.maps()[j].scale(), b.maps()[j].scale());
    EXPECT_TRUE(a.maps()[j].shift() == b.maps()[j].shift());
    EXPECT_TRUE(a.maps()[j].rotation() == b.maps()[j].rotation());
    EXPECT_NEAR(a.weights()[j], b.weights()[j], 1e-15);
  }
  EXPECT_TRUE(a.omega().lo() == b.omega().lo());
  EXPECT_TRUE(a.omega().hi() == b.omega().hi());
}

}  // namespace

TEST(SystemIo, ShippedConfigsMatchBuiltins) {
  for (const auto& name : builtin::names()) {
    const auto loaded = load_system(config(name + ".toml"));
    expect_same(loaded, *builtin::by_name(name));
  }
}

TEST(SystemIo, BuiltinNameLookup) {
  expect_same(load_system("sierpinski"), builtin::sierpinski());
}

TEST(SystemIo, MissingFileNamesPath) {
  try {
    load_system("/nonexistent/system.toml");
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("/nonexistent/system.toml"), std::string::npos);
  }
}

TEST(SystemIo, JsonRoundTrip) {
  for (const auto& name : builtin::names()) {
    const auto sys = *builtin::by_name(name);
    const auto text = system_to_json(sys).dump();
    expect_same(parse_system(text, false), sys);
  }
}

TEST(SystemIo, RotationAndExplicitWeights) {
  const std::string text = R"({
    "dim": 2,
    "weights": [0.5, 0.5],
    "omega": {"lo": [-1, -1], "hi": [1, 1]},
    "maps": [
      {"scale": 0.4, "rotation": [[0, -1], [1, 0]], "shift": [-0.5, 0]},
      {"scale": 0.4, "rotation": [0, 1, -1, 0], "shift": [0.5, 0]}
    ]
  })";
  const auto sys = parse_system(text, false);
  EXPECT_EQ(sys.maps()[0].rotation()(0, 1), -1.0);
  EXPECT_EQ(sys.maps()[1].rotation()(1, 0), -1.0);
  EXPECT_EQ(sys.weights()[1], 0.5);
}

TEST(SystemIo, TomlAndErrors) {
  const std::string toml_text = R"(
weights = "hausdorff"
[[maps]]
scale = 0.25
shift = [0.0]
[[maps]]
scale = 0.25
shift = [0.75]
)";
  const auto sys = parse_system(toml_text, true);
  EXPECT_EQ(sys.dim(), 1);
  EXPECT_NEAR(sys.weights()[0], 0.5, 1e-15);
  EXPECT_THROW(parse_system("maps = 3", true), ValidationError);
  EXPECT_THROW(parse_system("{\"maps\": [}", false), ValidationError);
  EXPECT_THROW(parse_system("[[maps]\nscale = ", true), ValidationError);
  EXPECT_THROW(parse_system(R"({"maps": [{"scale": 0.5, "shift": [0]}], "weights": "equal"})", false),
               ValidationError);
}

TEST(SystemIo, SniffsFormatWithoutExtension) {
  const auto dir = std::filesystem::temp_directory_path() / "fracdev_io_test";
  std::filesystem::create_directories(dir);
  const auto json_path = dir / "cantor_json";
  std::ofstream(json_path) << system_to_json(builtin::cantor()).dump(2);
  expect_same(load_system(json_path.string()), builtin::cantor());
  const auto toml_path = dir / "cantor_toml";
  std::filesystem::copy_file(config("cantor.toml"), toml_path,
                             std::filesystem::copy_options::overwrite_existing);
  expect_same(load_system(toml_path.string()), builtin::cantor());
  std::filesystem::remove_all(dir);
}

TEST(ReportIo, CurveCsvSchema) {
  std::vector<double> norms = {0.1, 0.2, 0.3};
  const auto curve = curve_from_norms(norms, {0.05, 0.25, 1.0}, 2.0);
  std::ostringstream os;
  write_curve_csv(os, curve);
  const auto text = os.str();
  EXPECT_EQ(text.substr(0, text.find('\n')), "eps,p_hat,lo,hi,phi,flag");
  EXPECT_NE(text.find(",,unresolved"), std::string::npos);
  EXPECT_NE(text.find("saturated"), std::string::npos);
}
