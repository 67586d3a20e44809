#include "mbsmith/pathsm.hpp"

#include <algorithm>
#include <stdexcept>

namespace mbsmith {

PathDirections::PathDirections(std::vector<Direction> dirs) : dirs_(std::move(dirs)) {}

PathDirections PathDirections::reversed() const {
    std::vector<Direction> r;
    r.reserve(dirs_.size());
    for (auto it = dirs_.rbegin(); it != dirs_.rend(); ++it) r.push_back(-*it);
    return PathDirections(std::move(r));
}

Spectrum vertex_term(const Direction& d_in, const Direction& d_out, const MicrosurfaceParams& p, const FresnelSpec& fr) {
    const auto h = reflection_half_vector(d_in, d_out);
    if (!h || h->z() <= 0.0) return {};
    const double d = ndf(*h, p);
    if (d == 0.0) return {};
    const double cos_in = std::max(std::abs(d_in.z()), kMinCos);
    return fresnel_eval(-d_in, *h, fr) * (d / (4.0 * cos_in));
}

Spectrum phase_function(const Direction& d_in, const Direction& d_out, const MicrosurfaceParams& p, const FresnelSpec& fr) {
    const auto h = reflection_half_vector(d_in, d_out);
    if (!h || h->z() <= 0.0) return {};
    const double dv = visible_ndf(*h, -d_in, p);
    if (dv == 0.0) return {};
    const double c = std::max(std::abs(dot(*h, d_in)), kMinCos);
    return fresnel_eval(-d_in, *h, fr) * (dv / (4.0 * c));
}

double s1(const Direction& d0, const Direction& d1, const MicrosurfaceParams& p) {
    if (d0.z() > 0.0 || d1.z() < 0.0) return 0.0;
    return 1.0 / (1.0 + detail::lambda_abs(d0.vec(), p) + detail::lambda_abs(d1.vec(), p));
}

SegmentTable::SegmentTable(const MicrosurfaceParams& p) : params_(p) {}

SegmentTable::SegmentTable(std::span<const Direction> dirs, const MicrosurfaceParams& p) : params_(p) {
    dirs_.reserve(dirs.size());
    windows_.reserve(dirs.size() * (dirs.size() + 1) / 2);
    for (const auto& d : dirs) extend(d);
}

double SegmentTable::s1_cached(std::size_t i, std::size_t j) const {
    if (dirs_[i].z() > 0.0 || dirs_[j].z() < 0.0) return 0.0;
    return 1.0 / (1.0 + lambda_[i] + lambda_[j]);
}

double SegmentTable::s1_to(std::size_t i, const Direction& d, double lambda_end) const {
    if (dirs_[i].z() > 0.0 || d.z() < 0.0) return 0.0;
    return 1.0 / (1.0 + lambda_[i] + lambda_end);
}

void SegmentTable::extend(const Direction& d) {
    const std::size_t n = dirs_.size();
    dirs_.push_back(d);
    lambda_.push_back(detail::lambda_abs(d.vec(), params_));
    if (n == 0) return;
    const std::size_t prev = column_offset(n - 1);
    const std::size_t cur = windows_.size();
    windows_.resize(cur + n);
    double* col = windows_.data() + cur;
    col[n - 1] = s1_cached(n - 1, n);
    for (std::size_t i = n - 1; i-- > 0;) {
        const double outer = s1_cached(i, n);
        col[i] = outer == 0.0 ? 0.0 : outer * (windows_[prev + i] + col[i + 1]);
    }
}

double SegmentTable::peek_extend(const Direction& d) const {
    const std::size_t n = dirs_.size();
    if (n == 0) return 0.0;
    const double lambda = detail::lambda_abs(d.vec(), params_);
    const std::size_t prev = column_offset(n - 1);
    scratch_.resize(n);
    scratch_[n - 1] = s1_to(n - 1, d, lambda);
    for (std::size_t i = n - 1; i-- > 0;) {
        const double outer = s1_to(i, d, lambda);
        scratch_[i] = outer == 0.0 ? 0.0 : outer * (windows_[prev + i] + scratch_[i + 1]);
    }
    return scratch_[0];
}

double path_shadowing(std::span<const Direction> path, const MicrosurfaceParams& p) {
    if (path.size() < 2) throw std::invalid_argument("path_shadowing needs at least two directions");
    return SegmentTable(path, p).full();
}

double path_shadowing(const PathDirections& path, const MicrosurfaceParams& p) { return path_shadowing(path.view(), p); }

SegmentTable path_shadowing_extend(SegmentTable table, const PathDirections& path, const Direction& new_dir,
                                   const MicrosurfaceParams& /*p*/) {
    if (table.size() != path.size()) throw std::invalid_argument("segment table does not match the path");
    table.extend(new_dir);
    return table;
}

Spectrum path_contribution(std::span<const Direction> path, const MicrosurfaceParams& p, const FresnelSpec& fr) {
    if (path.size() < 2 || !(path.front().z() < 0.0) || !(path.back().z() > 0.0))
        throw DomainError("path contribution requires a complete path (d_0 down, d_k up)");
    Spectrum f(1.0);
    for (std::size_t i = 0; i + 1 < path.size(); ++i) {
        f *= vertex_term(path[i], path[i + 1], p, fr);
        if (f.is_black()) return {};
    }
    return f * path_shadowing(path, p);
}

Spectrum path_contribution(const PathDirections& path, const MicrosurfaceParams& p, const FresnelSpec& fr) {
    return path_contribution(path.view(), p, fr);
}

}  // namespace mbsmith
