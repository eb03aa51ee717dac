#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

namespace pricecoord {

/// Linear inequality rows `matrix * p <= rhs` over one appliance's K slots.
struct ConstraintBlock {
  std::string appliance;
  Eigen::MatrixXd matrix;  // rows x K
  Eigen::VectorXd rhs;
  std::vector<std::string> labels;

  int rows() const { return static_cast<int>(matrix.rows()); }
  int horizon() const { return static_cast<int>(matrix.cols()); }

  /// Throws std::invalid_argument if the shape invariants are broken.
  void validate() const;
};

/// Accumulates rows and produces a ConstraintBlock in one allocation.
class BlockBuilder {
 public:
  BlockBuilder(std::string appliance, int horizon);

  /// coefficients . p <= bound. An all-zero row is checked on the spot and
  /// dropped (InfeasibleError if bound < 0).
  void add(const Eigen::VectorXd& coefficients, double bound, std::string label);
  /// p(slot) <= bound
  void add_upper(int slot, double bound, std::string label);
  /// p(slot) >= bound, stored as -p(slot) <= -bound
  void add_lower(int slot, double bound, std::string label);

  ConstraintBlock build() const;

 private:
  std::string appliance_;
  int horizon_;
  std::vector<double> coefficients_;
  std::vector<double> bounds_;
  std::vector<std::string> labels_;
};

struct BlockRange {
  int col_begin = 0;
  int row_begin = 0;
  int rows = 0;
};

/// Where a polyhedron row came from.
struct RowOrigin {
  int block = 0;
  int local_row = 0;
};

/// Block-diagonal system G p <= h over a home's stacked decision vector
/// p = (p_1(0..K-1), ..., p_M(0..K-1)). Blocks are stored separately; the
/// dense G is only materialized on request.
class ConstraintPolyhedron {
 public:
  ConstraintPolyhedron() = default;
  ConstraintPolyhedron(int horizon, std::vector<ConstraintBlock> blocks);

  int horizon() const { return horizon_; }
  int num_blocks() const { return static_cast<int>(blocks_.size()); }
  int num_variables() const { return horizon_ * num_blocks(); }
  int num_rows() const { return num_rows_; }

  const ConstraintBlock& block(int j) const { return blocks_.at(j); }
  const BlockRange& range(int j) const { return ranges_.at(j); }
  const std::vector<ConstraintBlock>& blocks() const { return blocks_; }

  /// Column of variable (appliance j, slot t) in the stacked vector.
  int column(int appliance, int slot) const { return appliance * horizon_ + slot; }

  RowOrigin locate(int row) const;
  /// "appliance/row-label", unique within a home.
  std::string label(int row) const;

  Eigen::MatrixXd dense_matrix() const;
  Eigen::VectorXd rhs() const;

  /// G p
  Eigen::VectorXd apply(const Eigen::VectorXd& p) const;
  /// G' lambda
  Eigen::VectorXd apply_transpose(const Eigen::VectorXd& lambda) const;
  /// max(G p - h), can be negative for strictly interior points.
  double max_violation(const Eigen::VectorXd& p) const;
  int most_violated_row(const Eigen::VectorXd& p) const;

 private:
  int horizon_ = 0;
  int num_rows_ = 0;
  std::vector<ConstraintBlock> blocks_;
  std::vector<BlockRange> ranges_;
};

/// Stacks blocks block-diagonally in the given order.
ConstraintPolyhedron assemble_home_polyhedron(std::vector<ConstraintBlock> blocks);

}  // namespace pricecoord
