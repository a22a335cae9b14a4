#include "raresim/estimator.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <span>
#include <thread>
#include <vector>

#include "raresim/errors.hpp"

namespace raresim {

namespace {

constexpr std::int64_t kChunk = 4096;

// pairwise reduction: error grows like log(n) instead of n
double pairwise_sum(std::span<const double> v) {
  if (v.size() <= 16) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
  }
  const std::size_t half = v.size() / 2;
  return pairwise_sum(v.first(half)) + pairwise_sum(v.subspan(half));
}

}  // namespace

EstimatorReport estimate(const MarkovModel& model, const ChangeOfMeasure& measure,
                         std::int64_t replications, const RngStream& stream, int threads,
                         const SamplerLimits& limits) {
  if (replications < 1) throw ModelError("replications must be positive");
  if (threads < 1) throw ModelError("threads must be positive");
  require_compatible(model, measure);

  const std::int64_t n_chunks = (replications + kChunk - 1) / kChunk;
  std::vector<double> values(static_cast<std::size_t>(replications));
  std::vector<double> sums(static_cast<std::size_t>(n_chunks));
  std::vector<double> square_sums(static_cast<std::size_t>(n_chunks));
  std::vector<std::int64_t> chunk_hits(static_cast<std::size_t>(n_chunks), 0);

  // Replication r always draws from stream.substream(r), every chunk is
  // reduced pairwise on its own, and the chunk sums are combined in index
  // order — the result is bit-identical no matter how chunks land on threads.
  auto run_chunk = [&](std::int64_t c) {
    const std::int64_t begin = c * kChunk;
    const std::int64_t end = std::min(begin + kChunk, replications);
    std::vector<double> squares(static_cast<std::size_t>(end - begin));
    for (std::int64_t r = begin; r < end; ++r) {
      RngStream path_stream = stream.substream(static_cast<std::uint64_t>(r));
      SamplePath path = sample_path(model, measure, path_stream, limits);
      double v = 0.0;
      if (path.hit_bad) {
        v = std::exp(path.log_weight);
        ++chunk_hits[static_cast<std::size_t>(c)];
      }
      values[static_cast<std::size_t>(r)] = v;
      squares[static_cast<std::size_t>(r - begin)] = v * v;
    }
    sums[static_cast<std::size_t>(c)] = pairwise_sum(
        std::span<const double>(values).subspan(static_cast<std::size_t>(begin),
                                                static_cast<std::size_t>(end - begin)));
    square_sums[static_cast<std::size_t>(c)] = pairwise_sum(squares);
  };

  if (threads == 1 || n_chunks == 1) {
    for (std::int64_t c = 0; c < n_chunks; ++c) run_chunk(c);
  } else {
    std::atomic<std::int64_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto worker = [&] {
      for (;;) {
        const std::int64_t c = next.fetch_add(1);
        if (c >= n_chunks) return;
        try {
          run_chunk(c);
        } catch (...) {
          std::scoped_lock lock(error_mutex);
          if (!error) error = std::current_exception();
          return;
        }
      }
    };
    std::vector<std::thread> pool;
    const int n_workers = static_cast<int>(std::min<std::int64_t>(threads, n_chunks));
    pool.reserve(static_cast<std::size_t>(n_workers));
    for (int t = 0; t < n_workers; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
    if (error) std::rethrow_exception(error);
  }

  std::int64_t hits = 0;
  for (std::int64_t h : chunk_hits) hits += h;

  EstimatorReport report;
  report.replications = replications;
  report.hits = hits;
  report.zero_hits = hits == 0;
  report.ci_reliable = hits >= 30;
  const double n = static_cast<double>(replications);
  report.mean = pairwise_sum(sums) / n;
  report.second_moment = pairwise_sum(square_sums) / n;

  // centered second pass: subtracting the mean before squaring keeps the
  // variance meaningful even when it is far smaller than mean^2 (a near
  // zero-variance measure), where second_moment - mean^2 would be pure
  // cancellation noise
  {
    std::vector<double> centered(static_cast<std::size_t>(n_chunks));
    std::vector<double> dev(kChunk);
    for (std::int64_t c = 0; c < n_chunks; ++c) {
      const std::int64_t begin = c * kChunk;
      const std::int64_t end = std::min(begin + kChunk, replications);
      for (std::int64_t r = begin; r < end; ++r) {
        const double d = values[static_cast<std::size_t>(r)] - report.mean;
        dev[static_cast<std::size_t>(r - begin)] = d * d;
      }
      centered[static_cast<std::size_t>(c)] = pairwise_sum(
          std::span<const double>(dev).first(static_cast<std::size_t>(end - begin)));
    }
    report.variance = pairwise_sum(centered) / n;
  }

  if (report.mean > 0.0) {
    report.relative_error = std::sqrt(report.variance / n) / report.mean;
    report.cv = std::sqrt(report.variance) / report.mean;
  }
  report.ci95_halfwidth = 1.96 * std::sqrt(report.variance / n);
  if (report.mean > 0.0 && report.second_moment > 0.0 && std::log(report.mean) != 0.0)
    report.rat = std::log(report.second_moment) / std::log(report.mean);
  else
    report.rat = std::numeric_limits<double>::quiet_NaN();
  return report;
}

OptimalityDiagnostics optimality_check(const MarkovModel& model,
                                       const ChangeOfMeasure& trained,
                                       const EstimatorReport& report) {
  const HittingProbabilities hp = hitting_probabilities(model);
  if (!(hp.from_start > 0.0))
    throw SolverError("the bad set is unreachable; nothing to diagnose");
  const ChangeOfMeasure zv = zero_variance_measure(model, hp, FirstStep::Conditioned);

  OptimalityDiagnostics d;
  d.exact_pa = hp.from_start;
  d.log_pa = std::log(hp.from_start);
  d.kl = kl_distance(model, zv, trained);
  d.kl_over_abs_log_pa = d.kl / std::abs(d.log_pa);
  const double m2 = exact_second_moment(model, trained);
  d.rat = std::isfinite(m2) && m2 > 0.0 ? std::log(m2) / d.log_pa
                                        : std::numeric_limits<double>::quiet_NaN();
  d.rat_estimated = report.rat;
  return d;
}

}  // namespace raresim
