#include "sqlenv/pipeline/pipeline.hpp"

#include "sqlenv/util/error.hpp"
#include "sqlenv/util/text.hpp"

#include <spdlog/spdlog.h>

#include <cmath>
#include <limits>

namespace sqlenv::pipeline {

namespace {

std::vector<std::string_view> split_codepoints(std::string_view s) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < s.size()) {
        const auto c = static_cast<unsigned char>(s[i]);
        std::size_t len = c < 0x80 ? 1 : (c >> 5) == 0x6 ? 2 : (c >> 4) == 0xE ? 3 : (c >> 3) == 0x1E ? 4 : 1;
        len = std::min(len, s.size() - i);
        out.push_back(s.substr(i, len));
        i += len;
    }
    return out;
}

}  // namespace

std::vector<double> HashingEmbedder::embed(std::string_view s) {
    std::vector<double> v(dim_, 0.0);
    const auto cps = split_codepoints(s);
    auto add = [&](std::size_t from, std::size_t n) {
        std::string gram;
        for (std::size_t k = from; k < from + n; ++k) gram += cps[k];
        const auto h = text::fnv1a64(gram, seed_);
        v[h % dim_] += (h >> 63) ? -1.0 : 1.0;
    };
    if (cps.size() < 3) {
        if (!cps.empty()) add(0, cps.size());
    } else {
        for (std::size_t i = 0; i + 3 <= cps.size(); ++i) add(i, 3);
    }
    double norm = 0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (norm > 0)
        for (double& x : v) x /= norm;
    return v;
}

std::vector<std::vector<double>> embed_all(const std::vector<std::string>& texts, Embedder* primary, bool* fell_back) {
    if (fell_back) *fell_back = false;
    std::vector<std::vector<double>> out;
    if (primary) {
        try {
            for (const auto& t : texts) out.push_back(primary->embed(t));
            return out;
        } catch (const EmbedderUnavailable& e) {
            spdlog::warn("embedder unavailable ({}); using hashing fallback", e.what());
            out.clear();
        }
    }
    if (fell_back) *fell_back = primary != nullptr;
    HashingEmbedder fallback;
    for (const auto& t : texts) out.push_back(fallback.embed(t));
    return out;
}

double cosine_distance(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw DimensionMismatch("embedding sizes differ");
    double dot = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0 || nb == 0) return 1.0;
    return 1.0 - dot / (std::sqrt(na) * std::sqrt(nb));
}

namespace {

double total_cost(const std::vector<std::vector<double>>& d, const std::vector<std::size_t>& medoids) {
    double cost = 0;
    for (std::size_t j = 0; j < d.size(); ++j) {
        double best = std::numeric_limits<double>::infinity();
        for (auto m : medoids) best = std::min(best, d[m][j]);
        cost += best;
    }
    return cost;
}

}  // namespace

std::vector<std::size_t> k_medoids(const std::vector<std::vector<double>>& dist, std::size_t k) {
    const std::size_t n = dist.size();
    for (const auto& row : dist)
        if (row.size() != n) throw DimensionMismatch("distance matrix must be square");
    k = std::min(k, n);
    std::vector<std::size_t> medoids;
    if (k == 0) return medoids;

    std::vector<bool> is_medoid(n, false);
    while (medoids.size() < k) {
        double best = std::numeric_limits<double>::infinity();
        std::size_t pick = n;
        for (std::size_t c = 0; c < n; ++c) {
            if (is_medoid[c]) continue;
            auto trial = medoids;
            trial.push_back(c);
            const double cost = total_cost(dist, trial);
            if (cost < best - 1e-12) {
                best = cost;
                pick = c;
            }
        }
        medoids.push_back(pick);
        is_medoid[pick] = true;
    }

    double current = total_cost(dist, medoids);
    for (int iter = 0; iter < 100; ++iter) {
        double best = current;
        std::size_t best_slot = k, best_cand = n;
        for (std::size_t slot = 0; slot < k; ++slot) {
            for (std::size_t c = 0; c < n; ++c) {
                if (is_medoid[c]) continue;
                auto trial = medoids;
                trial[slot] = c;
                const double cost = total_cost(dist, trial);
                if (cost < best - 1e-12) {
                    best = cost;
                    best_slot = slot;
                    best_cand = c;
                }
            }
        }
        if (best_slot == k) break;
        is_medoid[medoids[best_slot]] = false;
        medoids[best_slot] = best_cand;
        is_medoid[best_cand] = true;
        current = best;
    }
    std::sort(medoids.begin(), medoids.end());
    return medoids;
}

}  // namespace sqlenv::pipeline
