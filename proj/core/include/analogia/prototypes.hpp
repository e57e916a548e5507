#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <utility>
#include <vector>

#include "analogia/image.hpp"

namespace analogia {

using Vec = std::vector<double>;

inline constexpr double kDefaultDistanceScale = 20.0;

// Scaled normalized Euclidean distance: scale * || a/|a| - b/|b| ||.
// Symmetric, in [0, 2*scale]. Throws ContractError on a zero vector.
double distance(std::span<const double> a, std::span<const double> b, double scale = kDefaultDistanceScale);

struct KMeansOptions {
    std::size_t max_iterations = 50;
    double tolerance = 1e-6;  // stop once no centroid moves further than this
};

// Lloyd's algorithm with k-means++ seeding on raw (unnormalized) features.
// With fewer points than k, the points themselves are returned followed by
// copies of their mean.
std::vector<Vec> kmeans(std::span<const Vec> points, std::size_t k, std::uint64_t seed,
                        KMeansOptions options = {});

// M prototypes per class, class registry append-only.
class PrototypeStore {
public:
    PrototypeStore(std::size_t prototypes_per_class, std::size_t dim, double scale = kDefaultDistanceScale);

    std::size_t prototypes_per_class() const { return m_; }
    std::size_t dim() const { return dim_; }
    double scale() const { return scale_; }

    void register_class(ClassId id, std::vector<Vec> prototypes);
    // Replaces the prototypes of an already registered class.
    void replace(ClassId id, std::vector<Vec> prototypes);
    bool contains(ClassId id) const { return classes_.contains(id); }
    bool empty() const { return classes_.empty(); }
    std::size_t num_classes() const { return classes_.size(); }
    std::vector<ClassId> class_ids() const;  // ascending

    const std::vector<Vec>& prototypes(ClassId id) const;
    const Vec& prototype(ClassId id, std::size_t m) const;
    // phi <- phi + shift
    void counteract(ClassId id, std::size_t m, std::span<const double> shift);

    // Floats held as persistent per-class state: M * D * |classes|.
    std::size_t persistent_floats() const { return classes_.size() * m_ * dim_; }

    bool operator==(const PrototypeStore&) const = default;

private:
    std::size_t m_;
    std::size_t dim_;
    double scale_;
    std::map<ClassId, std::vector<Vec>> classes_;
};

// argmax_y sum_m exp(-d(f, phi_ym)); ties go to the smallest class id.
ClassId snmp_classify(std::span<const double> feature, const PrototypeStore& store);

struct ShiftEstimate {
    ClassId class_id = 0;
    std::size_t prototype_index = 0;
    Vec shift;
    std::size_t reference_count = 0;
    double mean_reference_distance = 0.0;
};

struct FeaturePair {
    Vec before;  // old-model feature
    Vec after;   // updated-model feature
};

// Soft-nearest weighted mean of the per-pair shifts (after - before), with
// weights exp(-d(before_i, prototype)).
ShiftEstimate estimate_shift(std::span<const FeaturePair> pairs, std::span<const double> prototype, double scale,
                             ClassId class_id = 0, std::size_t prototype_index = 0);

// Same kernel, fed raw current-task features instead of prompt-conditioned
// ones (semantic drift compensation baseline).
ShiftEstimate estimate_shift_sdc(std::span<const FeaturePair> raw_pairs, std::span<const double> prototype,
                                 double scale, ClassId class_id = 0, std::size_t prototype_index = 0);

void counteract(PrototypeStore& store, const ShiftEstimate& estimate);

}  // namespace analogia
