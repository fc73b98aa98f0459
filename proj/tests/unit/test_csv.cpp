#include <doctest.h>

#include <filesystem>
#include <random>

#include "ddetect/csv.hpp"

using namespace ddetect;

namespace {

std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "ddetect_test_csv";
  std::filesystem::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_CASE("telemetry CSV round-trips bit-exactly") {
  const auto t = sim::generate_profile(sim::default_detection_profile(), sim::default_sensors(), 21);
  const auto path = scratch("t.csv");
  csv::write_telemetry(path, t);
  const auto back = csv::read_telemetry(path);
  CHECK(back == t);
  CHECK(csv::read_text(path).rfind("t,rpm,power,", 0) == 0);
}

TEST_CASE("dataset CSV round-trips with origin") {
  auto d = prep::clean(sim::generate_profile(sim::default_detection_profile(), sim::default_sensors(), 22)).dataset;
  auto more = d;
  for (auto& o : more.origin) o = prep::Origin::synthetic;
  const auto both = d.concat(more);
  const auto path = scratch("d.csv");
  csv::write_dataset(path, both, true);
  const auto back = csv::read_dataset(path);
  CHECK(back.X == both.X);
  CHECK(back.Y == both.Y);
  CHECK(back.channels == both.channels);
  CHECK(back.origin == both.origin);
}

TEST_CASE("malformed CSV names file and line") {
  const auto path = scratch("bad.csv");
  csv::write_text(path, "t,rpm,power,a\n0,1,2,3\n1,1,x,3\n");
  CHECK_THROWS_WITH_AS(csv::read_telemetry(path), doctest::Contains("bad.csv:3"), Error);
  CHECK_THROWS_AS(csv::read_telemetry(scratch("missing.csv")), Error);
}
