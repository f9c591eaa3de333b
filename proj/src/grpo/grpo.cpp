#include "sqlenv/grpo/grpo.hpp"

#include "sqlenv/util/error.hpp"
#include "sqlenv/util/text.hpp"

#include <algorithm>
#include <cmath>

namespace sqlenv::grpo {

std::vector<double> group_advantages(const std::vector<double>& rewards, double eps) {
    if (rewards.size() < 2) throw DimensionMismatch("a reward group needs at least 2 members");
    if (!(eps > 0)) throw ConfigError("epsilon must be positive");
    const double g = static_cast<double>(rewards.size());
    // Work on offsets from the first reward so an exact shift of the whole
    // group gives bitwise-identical advantages.
    std::vector<double> d;
    d.reserve(rewards.size());
    for (double r : rewards) d.push_back(r - rewards[0]);
    double mean = 0;
    for (double x : d) mean += x;
    mean /= g;
    double var = 0;
    for (double x : d) var += (x - mean) * (x - mean);
    const double sd = std::sqrt(var / g);
    std::vector<double> out;
    out.reserve(rewards.size());
    for (double x : d) out.push_back((x - mean) / (sd + eps));
    return out;
}

MaskSpans build_loss_mask(const episode::Trajectory& traj) {
    MaskSpans spans;
    std::size_t pos = 0;
    for (const auto& s : traj.segments) {
        const std::size_t end = pos + text::codepoints(s.text);
        if (s.origin == episode::Origin::Model && s.maskable && end > pos) {
            if (!spans.empty() && spans.back().second == pos)
                spans.back().second = end;
            else
                spans.emplace_back(pos, end);
        }
        pos = end;
    }
    return spans;
}

bool spans_well_formed(const MaskSpans& spans, std::size_t text_size) {
    std::size_t prev_end = 0;
    for (std::size_t i = 0; i < spans.size(); ++i) {
        const auto [b, e] = spans[i];
        if (b >= e || e > text_size) return false;
        if (i && b < prev_end) return false;
        prev_end = e;
    }
    return true;
}

std::vector<bool> positions_from_spans(const MaskSpans& spans, const std::vector<Span>& position_offsets) {
    std::vector<bool> mask(position_offsets.size(), false);
    for (std::size_t i = 0; i < position_offsets.size(); ++i) {
        const auto [b, e] = position_offsets[i];
        auto it = std::upper_bound(spans.begin(), spans.end(), b,
                                   [](std::size_t v, const Span& s) { return v < s.first; });
        if (it == spans.begin()) continue;
        --it;
        mask[i] = b >= it->first && e <= it->second && b < e;
    }
    return mask;
}

double clipped_term(double rho, double advantage, double clip_eps) {
    const double clipped = std::clamp(rho, 1.0 - clip_eps, 1.0 + clip_eps);
    return std::min(rho * advantage, clipped * advantage);
}

ObjectiveResult masked_objective(const std::vector<SequenceInputs>& group, double clip_eps, double beta,
                                 Normalization norm) {
    ObjectiveResult r;
    double global_sum = 0;
    std::size_t global_n = 0;
    double seq_sum = 0;
    std::size_t seq_n = 0;
    for (const auto& s : group) {
        const auto n = s.logp_new.size();
        if (s.logp_old.size() != n || s.logp_ref.size() != n || s.mask.size() != n)
            throw DimensionMismatch("logp_new, logp_old, logp_ref and mask must have equal length");
        double sum = 0;
        std::size_t count = 0;
        for (std::size_t t = 0; t < n; ++t) {
            if (!s.mask[t]) continue;
            const double rho = std::exp(s.logp_new[t] - s.logp_old[t]);
            const double log_ref_ratio = s.logp_ref[t] - s.logp_new[t];
            const double kl = std::exp(log_ref_ratio) - log_ref_ratio - 1.0;
            sum += clipped_term(rho, s.advantage, clip_eps) - beta * kl;
            ++count;
        }
        global_sum += sum;
        global_n += count;
        if (count) {
            seq_sum += sum / static_cast<double>(count);
            ++seq_n;
        }
    }
    if (global_n == 0) {
        r.empty_mask = true;
        return r;
    }
    r.value = norm == Normalization::Global ? global_sum / static_cast<double>(global_n)
                                            : seq_sum / static_cast<double>(seq_n);
    return r;
}

ObjectiveResult masked_objective(const std::vector<double>& logp_new, const std::vector<double>& logp_old,
                                 const std::vector<double>& logp_ref, double advantage, const std::vector<bool>& mask,
                                 double clip_eps, double beta) {
    return masked_objective({SequenceInputs{logp_new, logp_old, logp_ref, mask, advantage}}, clip_eps, beta);
}

json export_row(const std::string& trajectory_id, double advantage, const MaskSpans& spans) {
    json s = json::array();
    for (const auto& [b, e] : spans) s.push_back({b, e});
    return {{"trajectory_id", trajectory_id}, {"advantage", advantage}, {"mask_spans", s}};
}

}  // namespace sqlenv::grpo
