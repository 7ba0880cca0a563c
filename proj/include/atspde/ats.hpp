#pragma once

#include <algorithm>
#include <numeric>

#include "atspde/indicators.hpp"

namespace atspde {

enum class SelectionKind { Global, Local };

// Indices of the I highest-scoring candidates; ties resolved by the lower
// flat index, so the result is deterministic.
inline std::vector<std::size_t> select_global_indices(const CandidateSet& cands, std::size_t I) {
    if (!cands.has_scores()) throw std::invalid_argument("select_global: scores missing");
    if (I > cands.size()) throw std::invalid_argument("select_global: I exceeds candidate count");
    std::vector<std::size_t> idx(cands.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        if (cands.scores[a] != cands.scores[b]) return cands.scores[a] > cands.scores[b];
        return a < b;
    });
    idx.resize(I);
    return idx;
}

// One index per parent group: the group argmax, ties to the lower j.
inline std::vector<std::size_t> select_local_indices(const CandidateSet& cands) {
    if (!cands.has_scores()) throw std::invalid_argument("select_local: scores missing");
    if (cands.J == 0 || cands.size() % cands.J != 0) {
        throw std::invalid_argument("select_local: invalid grouping");
    }
    std::vector<std::size_t> idx(cands.parents());
    for (std::size_t i = 0; i < cands.parents(); ++i) {
        std::size_t best = i * cands.J;
        for (std::size_t j = 1; j < cands.J; ++j) {
            std::size_t f = i * cands.J + j;
            if (cands.scores[f] > cands.scores[best]) best = f;
        }
        idx[i] = best;
    }
    return idx;
}

inline Matrix gather_rows(const Matrix& points, const std::vector<std::size_t>& idx) {
    Matrix out(idx.size(), points.cols);
    for (std::size_t i = 0; i < idx.size(); ++i) {
        const double* src = points.row(idx[i]);
        std::copy(src, src + points.cols, out.row(i));
    }
    return out;
}

inline Matrix select_global(const CandidateSet& cands, std::size_t I) {
    return gather_rows(cands.points, select_global_indices(cands, I));
}

inline Matrix select_local(const CandidateSet& cands) {
    return gather_rows(cands.points, select_local_indices(cands));
}

// The sampling algorithm in one step: generate J candidates per training
// point with the problem's process (drifted for Ind1/Ind2, pure Brownian
// for the Girsanov indicators), score every candidate, select I points.
inline Matrix ats_step(const Matrix& S, std::size_t I, std::size_t J, const IndicatorKind& kind,
                       SelectionKind sel, const Evaluator& eval, const EllipticProblem& prob,
                       ExitPolicy policy, Rng& rng) {
    if (S.rows != I) throw std::invalid_argument("ats_step: |S| != I");
    ProcessSpec proc = prob.process(kind.dt);
    if (kind.girsanov()) proc.drift = nullptr;  // candidates ride plain Brownian motion
    CandidateSet cands = propose_candidates(S, J, proc, eval, prob.domain, policy, rng);
    cands.scores.resize(cands.size());
    for (std::size_t f = 0; f < cands.size(); ++f) {
        cands.scores[f] = indicator(cands.points.row(f), kind, eval, prob, rng);
    }
    return (sel == SelectionKind::Global) ? select_global(cands, I) : select_local(cands);
}

}  // namespace atspde
