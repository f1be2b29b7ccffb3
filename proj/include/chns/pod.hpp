#pragma once

#include <string>
#include <vector>

#include "chns/transfer.hpp"

namespace chns {

/// Weighted snapshots y_i, each on its own mesh of one hierarchy.
struct SnapshotSet {
  std::vector<Field> items;
  std::vector<double> weights;
  XSpace x = XSpace::L2;

  int size() const { return static_cast<int>(items.size()); }
  void add(Field f, double weight) {
    items.push_back(std::move(f));
    weights.push_back(weight);
  }
  /// Throws SpaceError on empty sets, bad weights or mixed hierarchies.
  void validate() const;
  /// Coarsest mesh refining every snapshot mesh.
  MeshPtr common_mesh() const;
  /// Snapshots prolongated onto `mesh`, one column each.
  Mat prolongated(const MeshPtr& mesh) const;
};

/// Trapezoidal time-quadrature weights for K instants with step tau.
std::vector<double> trapezoid_weights(int K, double tau);

/// K_ij = √(α_i α_j) (y_i, y_j)_X with each product evaluated on the overlay of
/// the two snapshot meshes.
Mat snapshot_gramian(const SnapshotSet& s);
/// Same matrix after prolongating every snapshot to the common mesh.
Mat snapshot_gramian_prolonged(const SnapshotSet& s);

struct PodBasis {
  std::vector<Field> modes;  // on the common mesh
  Vec eigenvalues;           // full spectrum, descending
  int ell = 0;
  XSpace x = XSpace::L2;

  const SpacePtr& space() const { return modes.front().space; }
  /// Mode coefficients as columns.
  Mat matrix() const;
  /// Σ_{j>ℓ} λ_j.
  double tail(int ell) const;
  /// λ_j / λ_1.
  Vec normalized() const;
};

class RankError : public std::runtime_error {
 public:
  RankError(int requested, int rank)
      : std::runtime_error("requested " + std::to_string(requested) + " POD modes but the snapshot rank is " +
                           std::to_string(rank)),
        rank_(rank) {}
  int rank() const { return rank_; }

 private:
  int rank_;
};

/// Numerical rank of a spectrum: eigenvalues ≥ 1e-13·λ_1.
int numerical_rank(const Vec& eigenvalues);

/// Method of snapshots: eigenpairs of the Gramian, ψ_j = λ_j^{-1/2} Σ_i √α_i φ_ji y_i.
/// The Gramian is formed on the common mesh and decomposed in extended precision.
PodBasis pod_basis(const SnapshotSet& s, int ell);

/// Σ_i α_i ‖y_i − Π_ℓ y_i‖²_X evaluated directly on the common mesh.
double projection_error(const SnapshotSet& s, const PodBasis& b, int ell);

/// An X-orthonormal basis of a whole FE space (eigenvectors of the Gram matrix).
PodBasis full_space_basis(const SpacePtr& space, XSpace x = XSpace::L2);

/// Normalized spectra of two snapshot sets side by side.
struct DecayReport {
  Vec smooth, nonsmooth;
  int first = 0, last = 0;  // compared index range, 1-based inclusive
  bool ordered = false;     // smooth ≤ nonsmooth on the whole range
};

DecayReport eigen_decay_report(const Vec& smooth_spectrum, const Vec& nonsmooth_spectrum, int first, int last);

}  // namespace chns
