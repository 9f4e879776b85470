#include "drive/io.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "json.hpp"

#include "drive/errors.hpp"

namespace drive {

namespace {

using nlohmann::json;

static_assert(sizeof(float) == 4);

void append_le(std::string& out, float v) {
  std::uint32_t bits = std::bit_cast<std::uint32_t>(v);
  char bytes[4];
  for (int i = 0; i < 4; ++i) bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xFFU);
  out.append(bytes, 4);
}

float read_le(const char* p) {
  std::uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) {
    bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  }
  return std::bit_cast<float>(bits);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

// Splits "<json line>\n<binary payload>".
std::pair<json, std::string_view> split_header(const std::string& bytes, const char* what) {
  auto nl = bytes.find('\n');
  if (nl == std::string::npos) throw FormatError(std::string(what) + ": missing header line");
  json header;
  try {
    header = json::parse(bytes.substr(0, nl));
  } catch (const json::exception& e) {
    throw FormatError(std::string(what) + ": malformed header: " + e.what());
  }
  return {header, std::string_view(bytes).substr(nl + 1)};
}

void append_observation(std::string& out, const Observation& obs) {
  for (float v : obs.image) append_le(out, v);
  append_le(out, obs.speed);
}

}  // namespace

std::size_t write_demo_log(std::span<const Transition> transitions,
                           const std::filesystem::path& path) {
  int height = kDefaultImageSize;
  int width = kDefaultImageSize;
  if (!transitions.empty()) {
    height = transitions.front().obs.height;
    width = transitions.front().obs.width;
  }
  const std::size_t pixels = static_cast<std::size_t>(height) * static_cast<std::size_t>(width);
  for (const auto& t : transitions) {
    if (t.obs.height != height || t.obs.width != width || t.next_obs.height != height ||
        t.next_obs.width != width || t.obs.image.size() != pixels ||
        t.next_obs.image.size() != pixels) {
      throw FormatError("write_demo_log: transitions mix image resolutions");
    }
  }
  for (std::size_t i = 0; i < transitions.size(); ++i) {
    try {
      transitions[i].validate();
    } catch (const ValidationError& e) {
      throw ValidationError("write_demo_log: transition " + std::to_string(i) + ": " + e.what());
    }
  }

  json header = {{"format", "drvlog"},
                 {"version", kDemoLogVersion},
                 {"height", height},
                 {"width", width},
                 {"count", transitions.size()}};
  std::string out = header.dump();
  out.push_back('\n');
  out.reserve(out.size() + transitions.size() * demo_record_floats(height, width) * 4);
  for (const auto& t : transitions) {
    for (float v : t.obs.image) append_le(out, v);
    append_le(out, t.obs.speed);
    append_le(out, t.action.throttle);
    append_le(out, t.action.brake);
    append_le(out, t.action.steering);
    append_le(out, t.reward);
    append_le(out, t.done ? 1.0F : 0.0F);
    append_observation(out, t.next_obs);
  }
  write_file(path, out);
  return transitions.size();
}

std::vector<Transition> read_demo_log(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  auto [header, payload] = split_header(bytes, "drvlog");
  int height = 0;
  int width = 0;
  std::size_t count = 0;
  try {
    if (header.at("format") != "drvlog") throw FormatError("drvlog: wrong format tag");
    if (header.at("version").get<int>() != kDemoLogVersion) {
      throw FormatError("drvlog: unsupported version");
    }
    height = header.at("height").get<int>();
    width = header.at("width").get<int>();
    count = header.at("count").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("drvlog: bad header: ") + e.what());
  }
  if (height <= 0 || width <= 0) throw FormatError("drvlog: non-positive resolution");

  const std::size_t record_bytes = demo_record_floats(height, width) * 4;
  if (payload.size() != count * record_bytes) {
    throw FormatError("drvlog: header count " + std::to_string(count) + " needs " +
                      std::to_string(count * record_bytes) + " payload bytes, found " +
                      std::to_string(payload.size()));
  }

  const std::size_t pixels = static_cast<std::size_t>(height) * static_cast<std::size_t>(width);
  std::vector<Transition> out;
  out.reserve(count);
  const char* p = payload.data();
  auto next = [&p]() {
    float v = read_le(p);
    p += 4;
    return v;
  };
  auto read_obs = [&](Observation& obs) {
    obs.height = height;
    obs.width = width;
    obs.image.resize(pixels);
    for (auto& v : obs.image) v = next();
    obs.speed = next();
  };
  for (std::size_t i = 0; i < count; ++i) {
    Transition t;
    read_obs(t.obs);
    t.action.throttle = next();
    t.action.brake = next();
    t.action.steering = next();
    t.reward = next();
    const float done = next();
    read_obs(t.next_obs);
    if (done != 0.0F && done != 1.0F) {
      throw ValidationError("drvlog: record " + std::to_string(i) + " has done flag not in {0,1}");
    }
    t.done = done == 1.0F;
    try {
      t.validate();
    } catch (const ValidationError& e) {
      throw ValidationError("drvlog: record " + std::to_string(i) + ": " + e.what());
    }
    out.push_back(std::move(t));
  }
  return out;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  ckpt.validate();
  json entries = json::array();
  std::size_t offset = 0;
  for (const auto& e : ckpt.entries) {
    entries.push_back({{"name", e.name}, {"shape", e.shape}, {"frozen", e.frozen},
                       {"offset", offset}});
    offset += e.values.size() * 4;
  }
  json manifest = {{"format", "drive-ckpt"},
                   {"version", 1},
                   {"meta",
                    {{"phase", ckpt.meta.phase},
                     {"seed", ckpt.meta.seed},
                     {"created_at", ckpt.meta.created_at},
                     {"config_digest", ckpt.meta.config_digest}}},
                   {"entries", entries},
                   {"blob_bytes", offset}};
  std::string out = manifest.dump();
  out.push_back('\n');
  out.reserve(out.size() + offset);
  for (const auto& e : ckpt.entries) {
    for (float v : e.values) append_le(out, v);
  }
  write_file(path, out);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  auto [manifest, blob] = split_header(bytes, "ckpt");
  Checkpoint ckpt;
  try {
    if (manifest.at("format") != "drive-ckpt") throw FormatError("ckpt: wrong format tag");
    const auto& meta = manifest.at("meta");
    ckpt.meta.phase = meta.at("phase").get<std::string>();
    ckpt.meta.seed = meta.at("seed").get<std::uint64_t>();
    ckpt.meta.created_at = meta.at("created_at").get<std::string>();
    ckpt.meta.config_digest = meta.at("config_digest").get<std::string>();
    const auto blob_bytes = manifest.at("blob_bytes").get<std::size_t>();
    if (blob_bytes != blob.size()) {
      throw FormatError("ckpt: manifest declares " + std::to_string(blob_bytes) +
                        " blob bytes, file holds " + std::to_string(blob.size()));
    }
    std::size_t expected_offset = 0;
    for (const auto& je : manifest.at("entries")) {
      CheckpointEntry e;
      e.name = je.at("name").get<std::string>();
      e.shape = je.at("shape").get<std::vector<int>>();
      e.frozen = je.at("frozen").get<bool>();
      const auto offset = je.at("offset").get<std::size_t>();
      if (offset != expected_offset) {
        throw FormatError("ckpt: entry '" + e.name + "' offset does not follow its predecessor");
      }
      std::size_t count = 1;
      for (int d : e.shape) {
        if (d < 0) throw FormatError("ckpt: negative dimension in '" + e.name + "'");
        count *= static_cast<std::size_t>(d);
      }
      if (offset + count * 4 > blob.size()) {
        throw FormatError("ckpt: entry '" + e.name + "' runs past the end of the blob");
      }
      e.values.resize(count);
      const char* p = blob.data() + offset;
      for (std::size_t i = 0; i < count; ++i) e.values[i] = read_le(p + 4 * i);
      expected_offset = offset + count * 4;
      ckpt.entries.push_back(std::move(e));
    }
    if (expected_offset != blob.size()) {
      throw FormatError("ckpt: entry shapes cover " + std::to_string(expected_offset) +
                        " bytes, blob holds " + std::to_string(blob.size()));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("ckpt: bad manifest: ") + e.what());
  }
  ckpt.validate();
  return ckpt;
}

std::string csv_number(double value) {
  if (std::isnan(value)) return "nan";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, res.ptr);
}

void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows) {
  std::string text;
  auto append_row = [&text](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i > 0) text += ',';
      text += cells[i];
    }
    text += '\n';
  };
  append_row(header);
  for (const auto& r : rows) append_row(r);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

}  // namespace drive
