#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mbsmith/fresnel.hpp"
#include "mbsmith/geometry.hpp"
#include "mbsmith/microfacet.hpp"
#include "mbsmith/spectrum.hpp"

namespace mbsmith {

// Position-free light path (d_0, ..., d_k). d_0 is the travelling direction of
// the incident light, d_k the exit direction. A complete path has d_0.z < 0
// and d_k.z > 0.
class PathDirections {
  public:
    PathDirections() = default;
    explicit PathDirections(std::vector<Direction> dirs);

    void push_back(const Direction& d) { dirs_.push_back(d); }

    std::size_t size() const { return dirs_.size(); }
    std::size_t bounces() const { return dirs_.empty() ? 0 : dirs_.size() - 1; }
    const Direction& operator[](std::size_t i) const { return dirs_[i]; }
    std::span<const Direction> view() const { return dirs_; }

    bool is_complete() const { return dirs_.size() >= 2 && dirs_.front().z() < 0.0 && dirs_.back().z() > 0.0; }

    // (-d_k, ..., -d_0): the same path traversed in the opposite direction.
    PathDirections reversed() const;

  private:
    std::vector<Direction> dirs_;
};

// v = F(-d_in, h) D(h) / (4 |d_in.z|), h the half vector of -d_in and d_out.
Spectrum vertex_term(const Direction& d_in, const Direction& d_out, const MicrosurfaceParams& p, const FresnelSpec& fr);

// Scattering phase function F D_{d_in}(h) / (4 |h . d_in|). For light travelling
// downward it satisfies phase * (1 + Lambda(-d_in)) = vertex_term; for upward
// travelling light the factor is Lambda(d_in).
Spectrum phase_function(const Direction& d_in, const Direction& d_out, const MicrosurfaceParams& p, const FresnelSpec& fr);

// Single-bounce segment term 1 / (1 + Lambda(-d0) + Lambda(d1)); zero when
// d0.z > 0 or d1.z < 0.
double s1(const Direction& d0, const Direction& d1, const MicrosurfaceParams& p);

// Memoized window table S_{j-i}(d_i, ..., d_j) for every contiguous window of a
// path under construction. Appending a direction costs O(current length).
class SegmentTable {
  public:
    explicit SegmentTable(const MicrosurfaceParams& p);
    SegmentTable(std::span<const Direction> dirs, const MicrosurfaceParams& p);

    void extend(const Direction& d);

    // Value the full window would take if d were appended; the table is unchanged.
    double peek_extend(const Direction& d) const;

    std::size_t size() const { return dirs_.size(); }
    std::span<const Direction> directions() const { return dirs_; }
    const MicrosurfaceParams& params() const { return params_; }

    // S over d_i..d_j, i < j.
    double window(std::size_t i, std::size_t j) const { return windows_[column_offset(j) + i]; }
    // S over the whole path; requires size() >= 2.
    double full() const { return window(0, dirs_.size() - 1); }

  private:
    // Windows ending at index j are stored contiguously, j entries each.
    static std::size_t column_offset(std::size_t j) { return j * (j - 1) / 2; }
    double s1_cached(std::size_t i, std::size_t j) const;
    double s1_to(std::size_t i, const Direction& d, double lambda_end) const;

    MicrosurfaceParams params_;
    std::vector<Direction> dirs_;
    // Lambda(-d_i) when d_i opens a window, Lambda(d_i) when it closes one;
    // both depend only on |z| and the azimuth.
    std::vector<double> lambda_;
    std::vector<double> windows_;
    mutable std::vector<double> scratch_;
};

// S_k of the whole path via the window table; zero when d_0.z > 0 or d_k.z < 0.
double path_shadowing(std::span<const Direction> path, const MicrosurfaceParams& p);
double path_shadowing(const PathDirections& path, const MicrosurfaceParams& p);

// Returns `table` extended with new_dir. `path` must be the path the table was built for.
SegmentTable path_shadowing_extend(SegmentTable table, const PathDirections& path, const Direction& new_dir,
                                   const MicrosurfaceParams& p);

// f(x) = prod v_i * S_k. Throws DomainError for an incomplete path.
Spectrum path_contribution(const PathDirections& path, const MicrosurfaceParams& p, const FresnelSpec& fr);
Spectrum path_contribution(std::span<const Direction> path, const MicrosurfaceParams& p, const FresnelSpec& fr);

}  // namespace mbsmith
