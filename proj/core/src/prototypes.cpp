#include "analogia/prototypes.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "analogia/errors.hpp"
#include "analogia/rng.hpp"

namespace analogia {

namespace {

double squared_euclidean(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return s;
}

Vec mean_of(std::span<const Vec> points) {
    Vec m(points.front().size(), 0.0);
    for (const auto& p : points)
        for (std::size_t i = 0; i < m.size(); ++i) m[i] += p[i];
    for (auto& v : m) v /= static_cast<double>(points.size());
    return m;
}

}  // namespace

double distance(std::span<const double> a, std::span<const double> b, double scale) {
    if (a.size() != b.size()) throw DimensionError("distance: dimension mismatch");
    double na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    na = std::sqrt(na);
    nb = std::sqrt(nb);
    if (na < 1e-8 || nb < 1e-8) throw ContractError("distance: zero-norm vector has no normalized direction");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double diff = a[i] / na - b[i] / nb;
        s += diff * diff;
    }
    return scale * std::sqrt(s);
}

std::vector<Vec> kmeans(std::span<const Vec> points, std::size_t k, std::uint64_t seed, KMeansOptions options) {
    if (points.empty()) throw ContractError("kmeans: no points");
    if (k == 0) throw ContractError("kmeans: k must be positive");
    const std::size_t n = points.size();
    const std::size_t dim = points.front().size();
    for (const auto& p : points) {
        if (p.size() != dim) throw DimensionError("kmeans: ragged input");
    }
    if (n < k) {
        std::vector<Vec> out(points.begin(), points.end());
        const Vec m = mean_of(points);
        while (out.size() < k) out.push_back(m);
        return out;
    }

    // k-means++ seeding.
    Rng rng(seed);
    std::vector<Vec> centroids;
    centroids.push_back(points[rng.index(n)]);
    std::vector<double> d2(n, std::numeric_limits<double>::infinity());
    while (centroids.size() < k) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            d2[i] = std::min(d2[i], squared_euclidean(points[i], centroids.back()));
            total += d2[i];
        }
        std::size_t pick = 0;
        if (total > 0.0) {
            double r = rng.uniform() * total;
            pick = n - 1;
            for (std::size_t i = 0; i < n; ++i) {
                r -= d2[i];
                if (r < 0.0) {
                    pick = i;
                    break;
                }
            }
        } else {
            pick = rng.index(n);
        }
        centroids.push_back(points[pick]);
    }

    std::vector<std::size_t> assign(n, 0);
    for (std::size_t iter = 0; iter < options.max_iterations; ++iter) {
        for (std::size_t i = 0; i < n; ++i) {
            double best = std::numeric_limits<double>::infinity();
            for (std::size_t c = 0; c < k; ++c) {
                const double dd = squared_euclidean(points[i], centroids[c]);
                if (dd < best) {
                    best = dd;
                    assign[i] = c;
                }
            }
        }
        std::vector<Vec> next(k, Vec(dim, 0.0));
        std::vector<std::size_t> count(k, 0);
        for (std::size_t i = 0; i < n; ++i) {
            ++count[assign[i]];
            for (std::size_t j = 0; j < dim; ++j) next[assign[i]][j] += points[i][j];
        }
        double moved = 0.0;
        for (std::size_t c = 0; c < k; ++c) {
            if (count[c] == 0) {
                next[c] = centroids[c];  // empty cluster keeps its centroid
                continue;
            }
            for (auto& v : next[c]) v /= static_cast<double>(count[c]);
            moved = std::max(moved, std::sqrt(squared_euclidean(next[c], centroids[c])));
        }
        centroids = std::move(next);
        if (moved < options.tolerance) break;
    }
    return centroids;
}

PrototypeStore::PrototypeStore(std::size_t prototypes_per_class, std::size_t dim, double scale)
    : m_(prototypes_per_class), dim_(dim), scale_(scale) {
    if (m_ == 0 || dim_ == 0) throw ContractError("prototype store: M and D must be positive");
    if (!(scale_ > 0.0)) throw ContractError("prototype store: distance scale must be positive");
}

void PrototypeStore::register_class(ClassId id, std::vector<Vec> prototypes) {
    if (classes_.contains(id)) throw ContractError("class " + std::to_string(id) + " is already registered");
    if (prototypes.size() != m_) throw ContractError("expected " + std::to_string(m_) + " prototypes per class");
    for (const auto& p : prototypes) {
        if (p.size() != dim_) throw DimensionError("prototype dimension mismatch");
    }
    classes_.emplace(id, std::move(prototypes));
}

void PrototypeStore::replace(ClassId id, std::vector<Vec> prototypes) {
    auto it = classes_.find(id);
    if (it == classes_.end()) throw ContractError("unknown class " + std::to_string(id));
    if (prototypes.size() != m_) throw ContractError("expected " + std::to_string(m_) + " prototypes per class");
    for (const auto& p : prototypes) {
        if (p.size() != dim_) throw DimensionError("prototype dimension mismatch");
    }
    it->second = std::move(prototypes);
}

std::vector<ClassId> PrototypeStore::class_ids() const {
    std::vector<ClassId> ids;
    for (const auto& [id, _] : classes_) ids.push_back(id);
    return ids;
}

const std::vector<Vec>& PrototypeStore::prototypes(ClassId id) const {
    auto it = classes_.find(id);
    if (it == classes_.end()) throw ContractError("unknown class " + std::to_string(id));
    return it->second;
}

const Vec& PrototypeStore::prototype(ClassId id, std::size_t m) const {
    const auto& ps = prototypes(id);
    if (m >= ps.size()) throw ContractError("prototype index out of range");
    return ps[m];
}

void PrototypeStore::counteract(ClassId id, std::size_t m, std::span<const double> shift) {
    auto it = classes_.find(id);
    if (it == classes_.end()) throw ContractError("unknown class " + std::to_string(id));
    if (m >= m_) throw ContractError("prototype index out of range");
    if (shift.size() != dim_) throw DimensionError("shift dimension mismatch");
    auto& phi = it->second[m];
    for (std::size_t i = 0; i < dim_; ++i) phi[i] += shift[i];
}

ClassId snmp_classify(std::span<const double> feature, const PrototypeStore& store) {
    if (store.empty()) throw ContractError("snmp_classify: empty prototype store");
    ClassId best_id = 0;
    double best = -1.0;
    // std::map iterates in ascending id order; strict > keeps the smallest id on ties.
    for (ClassId id : store.class_ids()) {
        double score = 0.0;
        for (const auto& phi : store.prototypes(id)) score += std::exp(-distance(feature, phi, store.scale()));
        if (score > best) {
            best = score;
            best_id = id;
        }
    }
    return best_id;
}

ShiftEstimate estimate_shift(std::span<const FeaturePair> pairs, std::span<const double> prototype, double scale,
                             ClassId class_id, std::size_t prototype_index) {
    if (pairs.empty()) throw ContractError("estimate_shift: no reference pairs");
    const std::size_t dim = prototype.size();
    std::vector<double> dist(pairs.size());
    double dmin = std::numeric_limits<double>::infinity();
    double dsum = 0.0;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        if (pairs[i].before.size() != dim || pairs[i].after.size() != dim) {
            throw DimensionError("estimate_shift: feature dimension mismatch");
        }
        dist[i] = distance(pairs[i].before, prototype, scale);
        dmin = std::min(dmin, dist[i]);
        dsum += dist[i];
    }
    // Shifting by the minimum distance leaves the normalized weights unchanged.
    Vec shift(dim, 0.0);
    double wsum = 0.0;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const double w = std::exp(-(dist[i] - dmin));
        wsum += w;
        for (std::size_t j = 0; j < dim; ++j) shift[j] += w * (pairs[i].after[j] - pairs[i].before[j]);
    }
    for (auto& v : shift) v /= wsum;

    ShiftEstimate est;
    est.class_id = class_id;
    est.prototype_index = prototype_index;
    est.shift = std::move(shift);
    est.reference_count = pairs.size();
    est.mean_reference_distance = dsum / static_cast<double>(pairs.size());
    return est;
}

ShiftEstimate estimate_shift_sdc(std::span<const FeaturePair> raw_pairs, std::span<const double> prototype,
                                 double scale, ClassId class_id, std::size_t prototype_index) {
    return estimate_shift(raw_pairs, prototype, scale, class_id, prototype_index);
}

void counteract(PrototypeStore& store, const ShiftEstimate& estimate) {
    store.counteract(estimate.class_id, estimate.prototype_index, estimate.shift);
}

}  // namespace analogia
