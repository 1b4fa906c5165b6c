#include "mds/engine.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <stdexcept>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "mds/error.hpp"
#include "mds/likelihood.hpp"
#include "mds/normal.hpp"

namespace mds {

std::string_view to_string(Backend backend) {
  switch (backend) {
    case Backend::serial:
      return "serial";
    case Backend::vectorized:
      return "vectorized";
    case Backend::threaded:
      return "threaded";
    case Backend::threaded_vectorized:
      return "threaded_vectorized";
    case Backend::tiled_device:
      return "tiled_device";
  }
  return "unknown";
}

Backend parse_backend(std::string_view name) {
  for (auto b : {Backend::serial, Backend::vectorized, Backend::threaded, Backend::threaded_vectorized,
                 Backend::tiled_device}) {
    if (to_string(b) == name) {
      return b;
    }
  }
  throw ConfigError("unknown backend '" + std::string(name) + "'");
}

void EngineConfig::validate() const {
  if (thread_count < 1) {
    throw ConfigError("thread_count must be >= 1");
  }
  if (lane_width != 1 && lane_width != 2 && lane_width != 4 && lane_width != 8) {
    throw ConfigError("lane_width must be one of 1, 2, 4, 8");
  }
  for (int tile : {likelihood_tile, gradient_tile}) {
    if (tile < 8 || tile > 256 || !std::has_single_bit(static_cast<unsigned>(tile))) {
      throw ConfigError("tile size must be a power of two in [8, 256]");
    }
  }
}

PaddedLatentBuffer::PaddedLatentBuffer(const LatentConfiguration& x, int lane_width)
    : n_(x.size()), d_(x.dim()) {
  const auto lanes = static_cast<std::size_t>(std::max(lane_width, 1));
  padded_d_ = (d_ + lanes - 1) / lanes * lanes;
  if (padded_d_ == 0) {
    padded_d_ = lanes;
  }
  storage_.assign(n_ * padded_d_, 0.0);
  const auto& coords = x.coords();
  for (std::size_t i = 0; i < n_; ++i) {
    for (std::size_t k = 0; k < d_; ++k) {
      storage_[i * padded_d_ + k] = coords(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k));
    }
  }
}

namespace {

void check_packet(std::span<const double> in, std::span<double> out) {
  const auto width = in.size();
  if (width != out.size() || width == 0 || width > kMaxLaneWidth || !std::has_single_bit(width)) {
    throw std::invalid_argument("packet width must be 1, 2, 4 or 8 and match the output");
  }
}

}  // namespace

void batched_log_phi(std::span<const double> in, std::span<double> out) {
  check_packet(in, out);
  const auto width = in.size();
#pragma omp simd
  for (std::size_t l = 0; l < width; ++l) {
    out[l] = log_phi(in[l]);
  }
}

void batched_inverse_mills(std::span<const double> in, std::span<double> out) {
  check_packet(in, out);
  const auto width = in.size();
#pragma omp simd
  for (std::size_t l = 0; l < width; ++l) {
    out[l] = inverse_mills(in[l]);
  }
}

double tiled_reduction_in_place(std::span<double> scratch) {
  std::size_t length = scratch.size();
  if (length == 0) {
    return 0.0;
  }
  while (length > 1) {
    const std::size_t half = std::bit_ceil(length) / 2;
    for (std::size_t k = 0; k + half < length; ++k) {
      scratch[k] += scratch[k + half];
    }
    length = half;
  }
  return scratch[0];
}

double tiled_reduction(std::span<const double> partials) {
  std::vector<double> scratch(partials.begin(), partials.end());
  return tiled_reduction_in_place(scratch);
}

bool backend_available(Backend backend, DeviceTarget device) {
  if (backend == Backend::tiled_device && device == DeviceTarget::accelerator) {
    // No accelerator runtime is linked into this build. Other backends ignore
    // the device target.
    return false;
  }
  switch (backend) {
    case Backend::serial:
    case Backend::vectorized:
      return true;
    case Backend::threaded:
    case Backend::threaded_vectorized:
    case Backend::tiled_device:
#ifdef _OPENMP
      return true;
#else
      return false;
#endif
  }
  return false;
}

namespace {

enum class Term { full, squares, truncation };

struct Kernel {
  const PaddedLatentBuffer& x;
  const double* y;  // null when only the truncation term is needed
  const ObservationMask& mask;
  double sigma;
  double inv_sigma;
  double half_precision;
  double precision;
};

inline double padded_distance(const double* a, const double* b, std::size_t padded_d) {
  double sum = 0.0;
#pragma omp simd reduction(+ : sum)
  for (std::size_t k = 0; k < padded_d; ++k) {
    const double diff = a[k] - b[k];
    sum += diff * diff;
  }
  return std::sqrt(sum);
}

template <Term term>
inline double pair_value(double y, double delta, double log_phi_value, double half_precision) {
  if constexpr (term == Term::truncation) {
    return log_phi_value;
  } else if constexpr (term == Term::squares) {
    const double residual = y - delta;
    return residual * residual * half_precision;
  } else {
    const double residual = y - delta;
    return residual * residual * half_precision + log_phi_value;
  }
}

struct Partial {
  double sum = 0.0;
  std::size_t observed = 0;
};

// Pairs (i, j) with i > j for one column j, one pair at a time.
template <Term term>
void column_scalar(const Kernel& k, std::size_t j, Partial& out) {
  const auto n = k.x.size();
  const auto pd = k.x.padded_dim();
  const double* xj = k.x.row(j);
  const double* yj = k.y != nullptr ? k.y + j * n : nullptr;
  const std::uint8_t* mj = k.mask.row(j);
  for (std::size_t i = j + 1; i < n; ++i) {
    if (mj[i] == 0) {
      continue;
    }
    const double delta = padded_distance(k.x.row(i), xj, pd);
    const double lp = term == Term::squares ? 0.0 : log_phi(delta * k.inv_sigma);
    out.sum += pair_value<term>(yj != nullptr ? yj[i] : 0.0, delta, lp, k.half_precision);
    ++out.observed;
  }
}

// Same column, `lanes` pairs per packet; lane partials live in `acc`.
template <Term term>
void column_vectorized(const Kernel& k, std::size_t j, std::size_t lanes, std::array<double, kMaxLaneWidth>& acc,
                       std::size_t& observed) {
  const auto n = k.x.size();
  const auto pd = k.x.padded_dim();
  const double* xj = k.x.row(j);
  const double* yj = k.y != nullptr ? k.y + j * n : nullptr;
  const std::uint8_t* mj = k.mask.row(j);
  std::array<double, kMaxLaneWidth> delta{};
  std::array<double, kMaxLaneWidth> args{};
  std::array<double, kMaxLaneWidth> lp{};
  std::array<double, kMaxLaneWidth> weight{};
  const std::span<const double> arg_packet(args.data(), lanes);
  const std::span<double> lp_packet(lp.data(), lanes);
  for (std::size_t i = j + 1; i < n; i += lanes) {
    for (std::size_t l = 0; l < lanes; ++l) {
      const std::size_t row = i + l;
      if (row < n) {
        delta[l] = padded_distance(k.x.row(row), xj, pd);
        weight[l] = mj[row] != 0 ? 1.0 : 0.0;
      } else {
        delta[l] = 0.0;
        weight[l] = 0.0;
      }
      args[l] = delta[l] * k.inv_sigma;
    }
    if constexpr (term != Term::squares) {
      batched_log_phi(arg_packet, lp_packet);
    }
    for (std::size_t l = 0; l < lanes; ++l) {
      const std::size_t row = i + l;
      const double y = (yj != nullptr && row < n) ? yj[row] : 0.0;
      if (weight[l] != 0.0) {
        acc[l] += pair_value<term>(y, delta[l], lp[l], k.half_precision);
        ++observed;
      }
    }
  }
}

// Column blocks [bounds[t], bounds[t+1]) carrying roughly equal numbers of
// i > j pairs.
std::vector<std::size_t> balanced_column_blocks(std::size_t n, std::size_t blocks) {
  std::vector<std::size_t> bounds(blocks + 1, n);
  bounds[0] = 0;
  const double total = 0.5 * static_cast<double>(n) * static_cast<double>(n > 0 ? n - 1 : 0);
  double cumulative = 0.0;
  std::size_t t = 1;
  for (std::size_t j = 0; j < n && t < blocks; ++j) {
    cumulative += static_cast<double>(n - 1 - j);
    while (t < blocks && cumulative >= total * static_cast<double>(t) / static_cast<double>(blocks)) {
      bounds[t++] = j + 1;
    }
  }
  for (; t < blocks; ++t) {
    bounds[t] = n;
  }
  return bounds;
}

template <Term term>
Partial reduce_columns(const Kernel& k, std::size_t begin, std::size_t end, std::size_t lanes) {
  Partial p;
  if (lanes <= 1) {
    for (std::size_t j = begin; j < end; ++j) {
      column_scalar<term>(k, j, p);
    }
    return p;
  }
  std::array<double, kMaxLaneWidth> acc{};
  for (std::size_t j = begin; j < end; ++j) {
    column_vectorized<term>(k, j, lanes, acc, p.observed);
  }
  p.sum = tiled_reduction_in_place(std::span<double>(acc.data(), lanes));
  return p;
}

template <Term term>
Partial reduce_threaded(const Kernel& k, int threads, std::size_t lanes) {
  const auto n = k.x.size();
  const auto blocks = static_cast<std::size_t>(threads);
  const auto bounds = balanced_column_blocks(n, blocks);
  std::vector<double> sums(blocks, 0.0);
  std::vector<std::size_t> counts(blocks, 0);
#pragma omp parallel num_threads(threads)
  {
#ifdef _OPENMP
    const auto first = static_cast<std::size_t>(omp_get_thread_num());
    const auto stride = static_cast<std::size_t>(omp_get_num_threads());
#else
    const std::size_t first = 0;
    const std::size_t stride = 1;
#endif
    for (std::size_t t = first; t < blocks; t += stride) {
      const Partial p = reduce_columns<term>(k, bounds[t], bounds[t + 1], lanes);
      sums[t] = p.sum;
      counts[t] = p.observed;
    }
  }
  Partial total;
  total.sum = tiled_reduction_in_place(sums);
  for (auto c : counts) {
    total.observed += c;
  }
  return total;
}

// B x B work-groups over the full N x N grid; the bounds/lower-triangle guard
// zeroes entries outside i > j. Each tile reduces on a binary tree, the tile
// partials of one tile-row reduce on a tree, then tile-rows reduce on a tree.
template <Term term>
Partial reduce_tiled(const Kernel& k, int threads, std::size_t tile) {
  const auto n = k.x.size();
  const auto pd = k.x.padded_dim();
  const std::size_t groups = (n + tile - 1) / tile;
  std::vector<double> row_partials(groups, 0.0);
  std::vector<std::size_t> row_counts(groups, 0);
#pragma omp parallel num_threads(threads)
  {
    std::vector<double> staged_i(tile * pd, 0.0);
    std::vector<double> staged_j(tile * pd, 0.0);
    std::vector<double> tile_values(tile * tile, 0.0);
    std::vector<double> tile_partials(groups, 0.0);
#pragma omp for schedule(static)
    for (std::size_t gi = 0; gi < groups; ++gi) {
      std::size_t observed = 0;
      const std::size_t i0 = gi * tile;
      for (std::size_t a = 0; a < tile && i0 + a < n; ++a) {
        std::copy_n(k.x.row(i0 + a), pd, staged_i.data() + a * pd);
      }
      for (std::size_t gj = 0; gj < groups; ++gj) {
        const std::size_t j0 = gj * tile;
        for (std::size_t b = 0; b < tile && j0 + b < n; ++b) {
          std::copy_n(k.x.row(j0 + b), pd, staged_j.data() + b * pd);
        }
        for (std::size_t a = 0; a < tile; ++a) {
          const std::size_t i = i0 + a;
          for (std::size_t b = 0; b < tile; ++b) {
            const std::size_t j = j0 + b;
            double value = 0.0;
            if (i < n && j < n && i > j && k.mask.observed(i, j)) {
              const double delta = padded_distance(staged_i.data() + a * pd, staged_j.data() + b * pd, pd);
              const double lp = term == Term::squares ? 0.0 : log_phi(delta * k.inv_sigma);
              value = pair_value<term>(k.y != nullptr ? k.y[i * n + j] : 0.0, delta, lp, k.half_precision);
              ++observed;
            }
            tile_values[a * tile + b] = value;
          }
        }
        tile_partials[gj] = tiled_reduction_in_place(tile_values);
      }
      row_partials[gi] = tiled_reduction_in_place(tile_partials);
      row_counts[gi] = observed;
    }
  }
  Partial total;
  total.sum = tiled_reduction_in_place(row_partials);
  for (auto c : row_counts) {
    total.observed += c;
  }
  return total;
}

template <Term term>
Partial reduce_pairs(const EngineConfig& cfg, const Kernel& k) {
  const auto lanes = static_cast<std::size_t>(cfg.lane_width);
  switch (cfg.backend) {
    case Backend::vectorized:
      return reduce_columns<term>(k, 0, k.x.size(), lanes);
    case Backend::threaded:
      return reduce_threaded<term>(k, cfg.thread_count, 1);
    case Backend::threaded_vectorized:
      return reduce_threaded<term>(k, cfg.thread_count, lanes);
    case Backend::tiled_device:
      return reduce_tiled<term>(k, cfg.thread_count, static_cast<std::size_t>(cfg.likelihood_tile));
    case Backend::serial:
      break;
  }
  return reduce_columns<term>(k, 0, k.x.size(), 1);
}

inline double gradient_coefficient(const Kernel& k, double y, double delta, double mills) {
  return (delta - y) * k.precision + mills * k.inv_sigma;
}

// out[0..pd) -= sum_j coef_ij / delta_ij * (x_i - x_j), one j at a time.
void gradient_row_scalar(const Kernel& k, std::size_t i, double* out, std::size_t& coincident) {
  const auto n = k.x.size();
  const auto pd = k.x.padded_dim();
  const double* xi = k.x.row(i);
  const double* yi = k.y + i * n;
  const std::uint8_t* mi = k.mask.row(i);
  for (std::size_t j = 0; j < n; ++j) {
    if (j == i || mi[j] == 0) {
      continue;
    }
    const double* xj = k.x.row(j);
    const double delta = padded_distance(xi, xj, pd);
    if (delta == 0.0) {
      ++coincident;
      continue;
    }
    const double scale = gradient_coefficient(k, yi[j], delta, inverse_mills(delta * k.inv_sigma)) / delta;
#pragma omp simd
    for (std::size_t c = 0; c < pd; ++c) {
      out[c] -= scale * (xi[c] - xj[c]);
    }
  }
}

void gradient_row_vectorized(const Kernel& k, std::size_t i, std::size_t lanes, double* out,
                             std::size_t& coincident) {
  const auto n = k.x.size();
  const auto pd = k.x.padded_dim();
  const double* xi = k.x.row(i);
  const double* yi = k.y + i * n;
  const std::uint8_t* mi = k.mask.row(i);
  std::array<double, kMaxLaneWidth> delta{};
  std::array<double, kMaxLaneWidth> args{};
  std::array<double, kMaxLaneWidth> mills{};
  const std::span<const double> arg_packet(args.data(), lanes);
  const std::span<double> mills_packet(mills.data(), lanes);
  for (std::size_t j0 = 0; j0 < n; j0 += lanes) {
    for (std::size_t l = 0; l < lanes; ++l) {
      const std::size_t j = j0 + l;
      delta[l] = j < n ? padded_distance(xi, k.x.row(j), pd) : 0.0;
      args[l] = delta[l] * k.inv_sigma;
    }
    batched_inverse_mills(arg_packet, mills_packet);
    for (std::size_t l = 0; l < lanes; ++l) {
      const std::size_t j = j0 + l;
      if (j >= n || j == i || mi[j] == 0) {
        continue;
      }
      if (delta[l] == 0.0) {
        ++coincident;
        continue;
      }
      const double* xj = k.x.row(j);
      const double scale = gradient_coefficient(k, yi[j], delta[l], mills[l]) / delta[l];
#pragma omp simd
      for (std::size_t c = 0; c < pd; ++c) {
        out[c] -= scale * (xi[c] - xj[c]);
      }
    }
  }
}

// B virtual threads per row; thread b strides j = b, b + B, ... into its own
// staging slot, then the B slots reduce on a binary tree.
void gradient_row_tiled(const Kernel& k, std::size_t i, std::size_t tile, std::vector<double>& staging, double* out,
                        std::size_t& coincident) {
  const auto n = k.x.size();
  const auto pd = k.x.padded_dim();
  const double* xi = k.x.row(i);
  const double* yi = k.y + i * n;
  const std::uint8_t* mi = k.mask.row(i);
  std::fill(staging.begin(), staging.end(), 0.0);
  for (std::size_t b = 0; b < tile; ++b) {
    double* slot = staging.data() + b * pd;
    for (std::size_t j = b; j < n; j += tile) {
      if (j == i || mi[j] == 0) {
        continue;
      }
      const double* xj = k.x.row(j);
      const double delta = padded_distance(xi, xj, pd);
      if (delta == 0.0) {
        ++coincident;
        continue;
      }
      const double scale = gradient_coefficient(k, yi[j], delta, inverse_mills(delta * k.inv_sigma)) / delta;
      for (std::size_t c = 0; c < pd; ++c) {
        slot[c] -= scale * (xi[c] - xj[c]);
      }
    }
  }
  for (std::size_t width = tile / 2; width >= 1; width /= 2) {
    for (std::size_t b = 0; b < width; ++b) {
      double* lhs = staging.data() + b * pd;
      const double* rhs = staging.data() + (b + width) * pd;
      for (std::size_t c = 0; c < pd; ++c) {
        lhs[c] += rhs[c];
      }
    }
  }
  std::copy_n(staging.data(), pd, out);
}

Kernel make_kernel(const PaddedLatentBuffer& buffer, const double* y, const ObservationMask& mask,
                   const MdsParams& params) {
  const double sigma = params.sigma();
  return Kernel{buffer, y, mask, sigma, 1.0 / sigma, 0.5 / params.sigma2, 1.0 / params.sigma2};
}

}  // namespace

Engine::Engine(EngineConfig config) : config_(config) {
  config_.validate();
  if (!backend_available(config_.backend, config_.device)) {
    throw CapabilityError("backend '" + std::string(to_string(config_.backend)) +
                          "' is not available on this host" +
                          (config_.device == DeviceTarget::accelerator ? " (no accelerator runtime)" : ""));
  }
}

double Engine::log_likelihood(const DissimilarityData& data, const LatentConfiguration& x, const MdsParams& params,
                              bool include_truncation) const {
  if (config_.backend == Backend::serial) {
    return log_likelihood_serial(data, x, params, include_truncation);
  }
  check_dimensions(data, x);
  params.validate();
  const PaddedLatentBuffer buffer(x, config_.lane_width);
  const Kernel k = make_kernel(buffer, data.values().data(), data.mask(), params);
  const Partial p = include_truncation ? reduce_pairs<Term::full>(config_, k) : reduce_pairs<Term::squares>(config_, k);
  return likelihood_constant(p.observed, params.sigma2) - p.sum;
}

double Engine::truncation_sum(const LatentConfiguration& x, const MdsParams& params,
                              const ObservationMask& mask) const {
  if (config_.backend == Backend::serial) {
    return truncation_sum_serial(x, params, mask);
  }
  if (mask.size() != x.size()) {
    throw std::invalid_argument("mask and latent configuration disagree on item count");
  }
  params.validate();
  const PaddedLatentBuffer buffer(x, config_.lane_width);
  const Kernel k = make_kernel(buffer, nullptr, mask, params);
  return reduce_pairs<Term::truncation>(config_, k).sum;
}

GradientMatrix Engine::gradient(const DissimilarityData& data, const LatentConfiguration& x,
                                const MdsParams& params) const {
  if (config_.backend == Backend::serial) {
    return log_likelihood_gradient_serial(data, x, params);
  }
  check_dimensions(data, x);
  params.validate();
  const PaddedLatentBuffer buffer(x, config_.lane_width);
  const Kernel k = make_kernel(buffer, data.values().data(), data.mask(), params);
  const auto n = x.size();
  const auto d = x.dim();
  const auto pd = buffer.padded_dim();
  const auto lanes = static_cast<std::size_t>(config_.lane_width);
  const int threads = config_.backend == Backend::vectorized ? 1 : config_.thread_count;
  const auto tile = static_cast<std::size_t>(config_.gradient_tile);

  GradientMatrix grad{RowMatrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d)), 0};
  std::size_t coincident = 0;
#pragma omp parallel num_threads(threads) reduction(+ : coincident)
  {
    std::vector<double> row(pd, 0.0);
    std::vector<double> staging;
    if (config_.backend == Backend::tiled_device) {
      staging.assign(tile * pd, 0.0);
    }
#pragma omp for schedule(static)
    for (std::size_t i = 0; i < n; ++i) {
      std::fill(row.begin(), row.end(), 0.0);
      switch (config_.backend) {
        case Backend::threaded:
          gradient_row_scalar(k, i, row.data(), coincident);
          break;
        case Backend::tiled_device:
          gradient_row_tiled(k, i, tile, staging, row.data(), coincident);
          break;
        default:
          gradient_row_vectorized(k, i, lanes, row.data(), coincident);
          break;
      }
      for (std::size_t c = 0; c < d; ++c) {
        grad.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = row[c];
      }
    }
  }
  grad.coincident_pairs = coincident;
  return grad;
}

}  // namespace mds
