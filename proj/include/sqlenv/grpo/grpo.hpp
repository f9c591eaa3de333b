#pragma once

#include "sqlenv/episode/episode.hpp"

#include <json.hpp>

#include <string>
#include <utility>
#include <vector>

namespace sqlenv::grpo {

using nlohmann::json;

inline constexpr double kDefaultEpsilon = 1e-6;

/// A_i = (r_i - mean) / (population std + eps). Throws DimensionMismatch for G < 2
/// and ConfigError for eps <= 0.
std::vector<double> group_advantages(const std::vector<double>& rewards, double eps = kDefaultEpsilon);

/// Half-open [start, end) codepoint offsets into the flattened trajectory text.
using Span = std::pair<std::size_t, std::size_t>;
using MaskSpans = std::vector<Span>;

/// Spans covering exactly the maskable model segments (adjacent ones merged).
MaskSpans build_loss_mask(const episode::Trajectory& traj);

/// True when spans are sorted, non-overlapping, non-empty and end by `text_size`.
bool spans_well_formed(const MaskSpans& spans, std::size_t text_size);

/// Position mask for a tokenization given as character [start, end) offsets per
/// position: a position is masked when its characters lie inside one span.
std::vector<bool> positions_from_spans(const MaskSpans& spans, const std::vector<Span>& position_offsets);

enum class Normalization { PerTrajectory, Global };

struct ObjectiveResult {
    double value = 0;
    bool empty_mask = false;  ///< no masked position anywhere
};

/// One trajectory's per-position inputs.
struct SequenceInputs {
    std::vector<double> logp_new;
    std::vector<double> logp_old;
    std::vector<double> logp_ref;
    std::vector<bool> mask;
    double advantage = 0;
};

/// Clipped surrogate minus beta * KL(new || ref) with the k3 estimator,
/// averaged over masked positions. PerTrajectory: mean per sequence, then mean
/// over sequences that have masked positions. Global: one mean over all
/// masked positions. Throws DimensionMismatch on ragged inputs.
ObjectiveResult masked_objective(const std::vector<SequenceInputs>& group, double clip_eps, double beta,
                                 Normalization norm = Normalization::PerTrajectory);

/// Single-sequence convenience form.
ObjectiveResult masked_objective(const std::vector<double>& logp_new, const std::vector<double>& logp_old,
                                 const std::vector<double>& logp_ref, double advantage, const std::vector<bool>& mask,
                                 double clip_eps, double beta);

/// Per-position surrogate term min(rho*A, clip(rho)*A).
double clipped_term(double rho, double advantage, double clip_eps);

/// Export row {trajectory_id, advantage, mask_spans}.
json export_row(const std::string& trajectory_id, double advantage, const MaskSpans& spans);

}  // namespace sqlenv::grpo
