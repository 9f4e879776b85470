#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "drive/errors.hpp"
#include "drive/io.hpp"
#include "drive/rng.hpp"

using namespace drive;
namespace fs = std::filesystem;

namespace {

fs::path temp_path(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "drive_test_io";
  fs::create_directories(dir);
  return dir / name;
}

Observation make_obs(int h, int w, float speed, float base) {
  Observation o;
  o.height = h;
  o.width = w;
  o.speed = speed;
  o.image.resize(static_cast<std::size_t>(h) * w);
  for (std::size_t i = 0; i < o.image.size(); ++i) {
    o.image[i] = std::fmod(base + 0.01f * static_cast<float>(i), 1.0f);
  }
  return o;
}

std::vector<Transition> sample_transitions(int n) {
  std::vector<Transition> out;
  for (int i = 0; i < n; ++i) {
    Transition t;
    t.obs = make_obs(4, 5, 0.5f * i, 0.1f * i);
    t.action = Action{0.25f, 0.0f, -0.5f + 0.1f * i};
    t.reward = 0.125f * i;
    t.next_obs = make_obs(4, 5, 0.5f * i + 0.1f, 0.2f);
    t.done = i == n - 1;
    out.push_back(t);
  }
  return out;
}

void write_bytes(const fs::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary);
  out << bytes;
}

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST(DemoLog, RoundTripIsBitwise) {
  const auto ts = sample_transitions(6);
  const fs::path p = temp_path("round.drvlog");
  EXPECT_EQ(write_demo_log(ts, p), ts.size());
  EXPECT_EQ(read_demo_log(p), ts);
  EXPECT_EQ(demo_record_floats(4, 5), 2u * 20u + 7u);
}

TEST(DemoLog, EmptyLogRoundTrips) {
  const fs::path p = temp_path("empty.drvlog");
  write_demo_log({}, p);
  EXPECT_TRUE(read_demo_log(p).empty());
}

TEST(DemoLog, CorruptionIsReported) {
  const fs::path p = temp_path("bad.drvlog");
  write_demo_log(sample_transitions(3), p);
  const std::string good = read_bytes(p);

  write_bytes(p, good.substr(0, good.size() - 4));
  EXPECT_THROW(read_demo_log(p), FormatError);
  write_bytes(p, "not a header");
  EXPECT_THROW(read_demo_log(p), FormatError);
  EXPECT_THROW(read_demo_log(temp_path("missing.drvlog")), IoError);

  // Action out of range inside an otherwise well-formed record.
  auto ts = sample_transitions(2);
  ts[0].action.throttle = 2.0f;
  EXPECT_THROW(write_demo_log(ts, p), ValidationError);
}

TEST(DemoLog, MixedResolutionsRejected) {
  auto ts = sample_transitions(2);
  ts[1].obs = make_obs(3, 3, 1.0f, 0.0f);
  ts[1].next_obs = ts[1].obs;
  EXPECT_THROW(write_demo_log(ts, temp_path("mixed.drvlog")), FormatError);
}

TEST(CheckpointFile, RoundTripIsBitwise) {
  Checkpoint ckpt;
  ckpt.meta = {"il", 17, reproducible_timestamp(), "0123456789abcdef"};
  ckpt.entries.push_back({"stem.conv1.weight", {2, 1, 3, 3}, true, std::vector<float>(18, 0.5f)});
  ckpt.entries.push_back({"head.bias", {3}, false, {1.0f, -2.0f, 3.5e-7f}});
  const fs::path p = temp_path("a.ckpt");
  save_checkpoint(ckpt, p);
  EXPECT_EQ(load_checkpoint(p), ckpt);

  const fs::path q = temp_path("b.ckpt");
  save_checkpoint(load_checkpoint(p), q);
  EXPECT_EQ(read_bytes(p), read_bytes(q));
}

TEST(CheckpointFile, TruncationDetected) {
  Checkpoint ckpt;
  ckpt.meta.phase = "il";
  ckpt.entries.push_back({"w", {4}, false, {1, 2, 3, 4}});
  const fs::path p = temp_path("t.ckpt");
  save_checkpoint(ckpt, p);
  const std::string good = read_bytes(p);
  write_bytes(p, good.substr(0, good.size() - 1));
  EXPECT_THROW(load_checkpoint(p), FormatError);
}

TEST(Timestamp, DefaultsToEpochAndHonoursSourceDateEpoch) {
  unsetenv("SOURCE_DATE_EPOCH");
  const std::string a = reproducible_timestamp();
  EXPECT_EQ(a, reproducible_timestamp());
  EXPECT_NE(a.find("1970-01-01"), std::string::npos);
  setenv("SOURCE_DATE_EPOCH", "86400", 1);
  EXPECT_NE(reproducible_timestamp().find("1970-01-02"), std::string::npos);
  unsetenv("SOURCE_DATE_EPOCH");
}

TEST(Csv, NumbersRoundTrip) {
  for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 12345678.9}) {
    EXPECT_EQ(std::stod(csv_number(v)), v);
  }
  EXPECT_EQ(csv_number(std::nan("")), "nan");
  const fs::path p = temp_path("t.csv");
  write_csv(p, {"a", "b"}, {{"1", "2"}, {"3", "4"}});
  EXPECT_EQ(read_bytes(p), "a,b\n1,2\n3,4\n");
}

TEST(Seeds, NamedStreamsAreDistinctAndStable) {
  EXPECT_EQ(derive_seed(5, "init"), derive_seed(5, "init"));
  EXPECT_NE(derive_seed(5, "init"), derive_seed(5, "replay"));
  EXPECT_NE(derive_seed(5, "init"), derive_seed(6, "init"));
  EXPECT_NE(derive_seed(5, std::uint64_t{0}), derive_seed(5, std::uint64_t{1}));
  Rng a = make_rng(1, "x"), b = make_rng(1, "x");
  for (int i = 0; i < 10; ++i) EXPECT_EQ(uniform(a, 0, 1), uniform(b, 0, 1));
}

TEST(Seeds, UniformMoments) {
  Rng rng(3);
  double sum = 0.0, sq = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const double z = standard_normal(rng);
    sum += z;
    sq += z * z;
  }
  EXPECT_NEAR(sum / n, 0.0, 0.02);
  EXPECT_NEAR(sq / n, 1.0, 0.02);
}

TEST(Types, ActionAndObservationValidation) {
  EXPECT_NO_THROW((Action{1.0f, 0.0f, -1.0f}.validate()));
  EXPECT_THROW((Action{1.1f, 0.0f, 0.0f}.validate()), ValidationError);
  EXPECT_THROW((Action{0.0f, 0.0f, std::nanf("")}.validate()), ValidationError);
  const Action c = Action::clamped(2.0, -1.0, 5.0);
  EXPECT_EQ(c, (Action{1.0f, 0.0f, 1.0f}));
  Observation o = make_obs(2, 2, 1.0f, 0.0f);
  EXPECT_NO_THROW(o.validate());
  o.speed = -1.0f;
  EXPECT_THROW(o.validate(), ValidationError);
  o.speed = 0.0f;
  o.image.pop_back();
  EXPECT_THROW(o.validate(), ValidationError);
}
