#pragma once

#include <filesystem>
#include <vector>

namespace drive {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
  friend bool operator==(const Vec2&, const Vec2&) = default;
};

double dot(Vec2 a, Vec2 b);
double cross(Vec2 a, Vec2 b);
double norm(Vec2 a);

struct Obstacle {
  Vec2 center;
  double radius = 0.0;
};

struct TrackSpec {
  std::vector<Vec2> centerline;  // closed: the last point connects back to the first
  double half_width = 3.5;
  std::vector<Obstacle> obstacles;

  /// Throws ConfigError for open, degenerate or self-intersecting centerlines.
  void validate() const;
};

/// Projection of a point onto the centerline.
struct TrackProjection {
  double arc_length = 0.0;     // along the centerline from point 0
  double lateral = 0.0;        // signed offset, positive to the left of travel
  double distance = 0.0;       // |lateral|
  std::size_t segment = 0;
  Vec2 closest;
};

/// Preprocessed closed track with arc-length queries.
class Track {
 public:
  explicit Track(TrackSpec spec);

  const TrackSpec& spec() const { return spec_; }
  double length() const { return length_; }
  double half_width() const { return spec_.half_width; }
  std::size_t size() const { return spec_.centerline.size(); }

  TrackProjection project(Vec2 p) const;
  Vec2 point_at(double s) const;
  double heading_at(double s) const;
  /// Signed curvature (1/m, positive for left turns) at arc length s.
  double curvature_at(double s) const;
  /// Largest |curvature| over [s, s + span].
  double max_abs_curvature(double s, double span) const;
  double wrap(double s) const;

  /// Segments whose distance to `center` may be below `radius`.
  std::vector<std::size_t> segments_near(Vec2 center, double radius) const;
  /// Distance from p to the centerline using only the listed segments.
  double distance_to_centerline(Vec2 p, const std::vector<std::size_t>& segments) const;

 private:
  std::size_t segment_at(double s) const;

  TrackSpec spec_;
  std::vector<double> cumulative_;  // arc length at each vertex, size n + 1
  std::vector<double> curvature_;   // per vertex
  double length_ = 0.0;
};

/// Minimum clearance to any obstacle: the road edges (half_width minus the
/// lateral offset) and obstacle circles. Negative values clamp to 0.
double nearest_obstacle_distance(const Track& track, Vec2 position);
/// Unclamped clearance; <= 0 means a collision.
double signed_clearance(const Track& track, Vec2 position);

/// 200 m closed circuit: two long straights joined by four corners of radius
/// 10, 15, 18 and 7 m; half-width 3.5 m; sampled every ~0.5 m.
TrackSpec default_track();

TrackSpec load_track_json(const std::filesystem::path& path);
void save_track_json(const TrackSpec& spec, const std::filesystem::path& path);

}  // namespace drive
