#include "drive/track.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>

#include "drive/errors.hpp"
#include "json.hpp"

namespace drive {

double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
double norm(Vec2 a) { return std::hypot(a.x, a.y); }

namespace {

struct SegmentHit {
  double t = 0.0;
  double distance = 0.0;
  Vec2 closest;
};

SegmentHit closest_on_segment(Vec2 p, Vec2 a, Vec2 b) {
  const Vec2 ab = b - a;
  const double len2 = dot(ab, ab);
  double t = len2 > 0.0 ? dot(p - a, ab) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const Vec2 c = a + t * ab;
  return {t, norm(p - c), c};
}

bool segments_cross(Vec2 a, Vec2 b, Vec2 c, Vec2 d) {
  const double d1 = cross(b - a, c - a);
  const double d2 = cross(b - a, d - a);
  const double d3 = cross(d - c, a - c);
  const double d4 = cross(d - c, b - c);
  return ((d1 > 0) != (d2 > 0)) && ((d3 > 0) != (d4 > 0)) && d1 != 0 && d2 != 0 && d3 != 0 &&
         d4 != 0;
}

}  // namespace

void TrackSpec::validate() const {
  if (!(half_width > 0.0) || !std::isfinite(half_width)) {
    throw ConfigError("track: half_width must be positive");
  }
  const std::size_t n = centerline.size();
  if (n < 3) throw ConfigError("track: centerline needs at least 3 distinct points");
  for (const auto& p : centerline) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) throw ConfigError("track: non-finite point");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (norm(centerline[(i + 1) % n] - centerline[i]) <= 1e-9) {
      throw ConfigError("track: repeated consecutive centerline point at index " +
                        std::to_string(i));
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 a = centerline[i];
    const Vec2 b = centerline[(i + 1) % n];
    for (std::size_t j = i + 2; j < n; ++j) {
      if (i == 0 && j == n - 1) continue;  // adjacent through the closing segment
      if (segments_cross(a, b, centerline[j], centerline[(j + 1) % n])) {
        throw ConfigError("track: centerline self-intersects (segments " + std::to_string(i) +
                          " and " + std::to_string(j) + ")");
      }
    }
  }
  for (const auto& o : obstacles) {
    if (!(o.radius > 0.0)) throw ConfigError("track: obstacle radius must be positive");
  }
}

Track::Track(TrackSpec spec) : spec_(std::move(spec)) {
  auto& pts = spec_.centerline;
  if (pts.size() >= 2 && norm(pts.back() - pts.front()) <= 1e-9) pts.pop_back();
  spec_.validate();
  const std::size_t n = pts.size();
  cumulative_.resize(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    cumulative_[i + 1] = cumulative_[i] + norm(pts[(i + 1) % n] - pts[i]);
  }
  length_ = cumulative_[n];
  curvature_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 in = pts[i] - pts[(i + n - 1) % n];
    const Vec2 out = pts[(i + 1) % n] - pts[i];
    const double turn = std::atan2(cross(in, out), dot(in, out));
    curvature_[i] = turn / (0.5 * (norm(in) + norm(out)));
  }
}

double Track::wrap(double s) const {
  double w = std::fmod(s, length_);
  if (w < 0.0) w += length_;
  return w;
}

std::size_t Track::segment_at(double s) const {
  const double w = wrap(s);
  auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), w);
  std::size_t idx = static_cast<std::size_t>(std::distance(cumulative_.begin(), it));
  idx = idx == 0 ? 0 : idx - 1;
  return std::min(idx, size() - 1);
}

Vec2 Track::point_at(double s) const {
  const double w = wrap(s);
  const std::size_t i = segment_at(w);
  const Vec2 a = spec_.centerline[i];
  const Vec2 b = spec_.centerline[(i + 1) % size()];
  const double seg = cumulative_[i + 1] - cumulative_[i];
  const double t = seg > 0.0 ? (w - cumulative_[i]) / seg : 0.0;
  return a + t * (b - a);
}

double Track::heading_at(double s) const {
  const std::size_t i = segment_at(s);
  const Vec2 d = spec_.centerline[(i + 1) % size()] - spec_.centerline[i];
  return std::atan2(d.y, d.x);
}

double Track::curvature_at(double s) const {
  const double w = wrap(s);
  const std::size_t i = segment_at(w);
  const double seg = cumulative_[i + 1] - cumulative_[i];
  const double t = seg > 0.0 ? (w - cumulative_[i]) / seg : 0.0;
  return t < 0.5 ? curvature_[i] : curvature_[(i + 1) % size()];
}

double Track::max_abs_curvature(double s, double span) const {
  double best = std::abs(curvature_at(s));
  const std::size_t n = size();
  std::size_t i = (segment_at(s) + 1) % n;
  double covered = cumulative_[segment_at(s) + 1] - wrap(s);
  while (covered <= span) {
    best = std::max(best, std::abs(curvature_[i]));
    covered += cumulative_[i + 1] - cumulative_[i];
    i = (i + 1) % n;
  }
  return best;
}

TrackProjection Track::project(Vec2 p) const {
  const std::size_t n = size();
  TrackProjection best;
  best.distance = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 a = spec_.centerline[i];
    const Vec2 b = spec_.centerline[(i + 1) % n];
    const auto hit = closest_on_segment(p, a, b);
    if (hit.distance < best.distance) {
      best.distance = hit.distance;
      best.segment = i;
      best.closest = hit.closest;
      best.arc_length = cumulative_[i] + hit.t * (cumulative_[i + 1] - cumulative_[i]);
      const double side = cross(b - a, p - hit.closest);
      best.lateral = side >= 0.0 ? hit.distance : -hit.distance;
    }
  }
  best.arc_length = wrap(best.arc_length);
  return best;
}

std::vector<std::size_t> Track::segments_near(Vec2 center, double radius) const {
  std::vector<std::size_t> out;
  const std::size_t n = size();
  for (std::size_t i = 0; i < n; ++i) {
    const auto hit = closest_on_segment(center, spec_.centerline[i], spec_.centerline[(i + 1) % n]);
    if (hit.distance <= radius) out.push_back(i);
  }
  return out;
}

double Track::distance_to_centerline(Vec2 p, const std::vector<std::size_t>& segments) const {
  double best = std::numeric_limits<double>::infinity();
  const std::size_t n = size();
  for (std::size_t i : segments) {
    const Vec2 a = spec_.centerline[i];
    const Vec2 ab = spec_.centerline[(i + 1) % n] - a;
    const double len2 = dot(ab, ab);
    double t = std::clamp(dot(p - a, ab) / len2, 0.0, 1.0);
    const double dx = p.x - (a.x + t * ab.x);
    const double dy = p.y - (a.y + t * ab.y);
    best = std::min(best, dx * dx + dy * dy);
  }
  return std::sqrt(best);
}

double signed_clearance(const Track& track, Vec2 position) {
  double clearance = track.half_width() - track.project(position).distance;
  for (const auto& o : track.spec().obstacles) {
    clearance = std::min(clearance, norm(position - o.center) - o.radius);
  }
  return clearance;
}

double nearest_obstacle_distance(const Track& track, Vec2 position) {
  return std::max(0.0, signed_clearance(track, position));
}

TrackSpec default_track() {
  constexpr double kLength = 200.0;
  constexpr double kSpacing = 0.5;
  const double r1 = 10.0, r2 = 15.0, r3 = 18.0, r4 = 7.0;
  const double quarter = std::numbers::pi / 2.0;
  const double arcs = quarter * (r1 + r2 + r3 + r4);
  const double bottom = (kLength - arcs - (r1 - r2 + r3 - r4)) / 2.0;
  const double top = bottom + r1 - r2 + r3 - r4;

  TrackSpec spec;
  Vec2 pos{0.0, 0.0};
  double heading = 0.0;
  auto straight = [&](double len) {
    const int steps = static_cast<int>(std::ceil(len / kSpacing));
    const Vec2 dir{std::cos(heading), std::sin(heading)};
    for (int i = 0; i < steps; ++i) {
      spec.centerline.push_back(pos);
      pos = pos + (len / steps) * dir;
    }
  };
  auto left_arc = [&](double radius) {
    const int steps = static_cast<int>(std::ceil(radius * quarter / kSpacing));
    const Vec2 center = pos + radius * Vec2{-std::sin(heading), std::cos(heading)};
    const double start = heading - quarter;  // angle of pos around center
    for (int i = 0; i < steps; ++i) {
      spec.centerline.push_back(pos);
      const double a = start + quarter * (i + 1) / steps;
      pos = center + radius * Vec2{std::cos(a), std::sin(a)};
    }
    heading += quarter;
  };
  straight(bottom);
  left_arc(r1);
  left_arc(r2);
  straight(top);
  left_arc(r4);
  left_arc(r3);
  spec.half_width = 3.5;
  return spec;
}

TrackSpec load_track_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open track file '" + path.string() + "'");
  TrackSpec spec;
  try {
    const auto j = nlohmann::json::parse(in);
    for (const auto& p : j.at("centerline")) {
      spec.centerline.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
    }
    spec.half_width = j.value("half_width", 3.5);
    if (j.contains("obstacles")) {
      for (const auto& o : j.at("obstacles")) {
        spec.obstacles.push_back(
            {{o.at("center").at(0).get<double>(), o.at("center").at(1).get<double>()},
             o.at("radius").get<double>()});
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("track '" + path.string() + "': " + e.what());
  }
  Track check(spec);  // validates
  return spec;
}

void save_track_json(const TrackSpec& spec, const std::filesystem::path& path) {
  nlohmann::json j;
  j["half_width"] = spec.half_width;
  j["centerline"] = nlohmann::json::array();
  for (const auto& p : spec.centerline) j["centerline"].push_back({p.x, p.y});
  j["obstacles"] = nlohmann::json::array();
  for (const auto& o : spec.obstacles) {
    j["obstacles"].push_back({{"center", {o.center.x, o.center.y}}, {"radius", o.radius}});
  }
  std::ofstream out(path);
  if (!out) throw IoError("cannot write track file '" + path.string() + "'");
  out << j.dump(2) << '\n';
}

}  // namespace drive
