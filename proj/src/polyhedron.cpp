#include "pricecoord/polyhedron.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>

#include "pricecoord/errors.hpp"

namespace pricecoord {

void ConstraintBlock::validate() const {
  if (matrix.rows() != rhs.size()) {
    throw std::invalid_argument("constraint block '" + appliance + "': rhs length differs from row count");
  }
  if (static_cast<Eigen::Index>(labels.size()) != matrix.rows()) {
    throw std::invalid_argument("constraint block '" + appliance + "': label count differs from row count");
  }
  for (const auto& label : labels) {
    if (label.empty()) throw std::invalid_argument("constraint block '" + appliance + "': empty row label");
  }
}

BlockBuilder::BlockBuilder(std::string appliance, int horizon)
    : appliance_(std::move(appliance)), horizon_(horizon) {
  if (horizon_ < 1) throw std::invalid_argument("block horizon must be positive");
}

void BlockBuilder::add(const Eigen::VectorXd& coefficients, double bound, std::string label) {
  if (coefficients.size() != horizon_) throw std::invalid_argument("row length differs from horizon");
  // A row without variables is a constant check, never a constraint.
  if ((coefficients.array() == 0.0).all()) {
    if (bound < 0.0) throw InfeasibleError(appliance_ + "/" + label, appliance_ + ": constant row '" + label + "' is violated");
    return;
  }
  coefficients_.insert(coefficients_.end(), coefficients.data(), coefficients.data() + horizon_);
  bounds_.push_back(bound);
  labels_.push_back(std::move(label));
}

void BlockBuilder::add_upper(int slot, double bound, std::string label) {
  Eigen::VectorXd row = Eigen::VectorXd::Zero(horizon_);
  row(slot) = 1.0;
  add(row, bound, std::move(label));
}

void BlockBuilder::add_lower(int slot, double bound, std::string label) {
  Eigen::VectorXd row = Eigen::VectorXd::Zero(horizon_);
  row(slot) = -1.0;
  add(row, -bound, std::move(label));
}

ConstraintBlock BlockBuilder::build() const {
  ConstraintBlock block;
  block.appliance = appliance_;
  const auto rows = static_cast<Eigen::Index>(bounds_.size());
  block.matrix = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      coefficients_.data(), rows, horizon_);
  block.rhs = Eigen::Map<const Eigen::VectorXd>(bounds_.data(), rows);
  block.labels = labels_;
  return block;
}

ConstraintPolyhedron::ConstraintPolyhedron(int horizon, std::vector<ConstraintBlock> blocks)
    : horizon_(horizon), blocks_(std::move(blocks)) {
  ranges_.reserve(blocks_.size());
  int row = 0;
  for (std::size_t j = 0; j < blocks_.size(); ++j) {
    const auto& b = blocks_[j];
    b.validate();
    if (b.horizon() != horizon_ && b.rows() > 0) {
      throw std::invalid_argument("block '" + b.appliance + "' has a different horizon");
    }
    ranges_.push_back({static_cast<int>(j) * horizon_, row, b.rows()});
    row += b.rows();
  }
  num_rows_ = row;
}

RowOrigin ConstraintPolyhedron::locate(int row) const {
  if (row < 0 || row >= num_rows_) throw std::out_of_range("polyhedron row out of range");
  for (int j = 0; j < num_blocks(); ++j) {
    const auto& r = ranges_[j];
    if (row < r.row_begin + r.rows) return {j, row - r.row_begin};
  }
  throw std::out_of_range("polyhedron row out of range");
}

std::string ConstraintPolyhedron::label(int row) const {
  const auto origin = locate(row);
  const auto& b = blocks_[origin.block];
  return b.appliance + "/" + b.labels[origin.local_row];
}

Eigen::MatrixXd ConstraintPolyhedron::dense_matrix() const {
  Eigen::MatrixXd G = Eigen::MatrixXd::Zero(num_rows_, num_variables());
  for (int j = 0; j < num_blocks(); ++j) {
    const auto& r = ranges_[j];
    G.block(r.row_begin, r.col_begin, r.rows, horizon_) = blocks_[j].matrix;
  }
  return G;
}

Eigen::VectorXd ConstraintPolyhedron::rhs() const {
  Eigen::VectorXd h(num_rows_);
  for (int j = 0; j < num_blocks(); ++j) h.segment(ranges_[j].row_begin, ranges_[j].rows) = blocks_[j].rhs;
  return h;
}

Eigen::VectorXd ConstraintPolyhedron::apply(const Eigen::VectorXd& p) const {
  if (p.size() != num_variables()) throw std::invalid_argument("schedule length differs from polyhedron columns");
  Eigen::VectorXd out(num_rows_);
  for (int j = 0; j < num_blocks(); ++j) {
    const auto& r = ranges_[j];
    out.segment(r.row_begin, r.rows).noalias() = blocks_[j].matrix * p.segment(r.col_begin, horizon_);
  }
  return out;
}

Eigen::VectorXd ConstraintPolyhedron::apply_transpose(const Eigen::VectorXd& lambda) const {
  if (lambda.size() != num_rows_) throw std::invalid_argument("multiplier length differs from polyhedron rows");
  Eigen::VectorXd out(num_variables());
  for (int j = 0; j < num_blocks(); ++j) {
    const auto& r = ranges_[j];
    out.segment(r.col_begin, horizon_).noalias() = blocks_[j].matrix.transpose() * lambda.segment(r.row_begin, r.rows);
  }
  return out;
}

double ConstraintPolyhedron::max_violation(const Eigen::VectorXd& p) const {
  if (num_rows_ == 0) return -std::numeric_limits<double>::infinity();
  return (apply(p) - rhs()).maxCoeff();
}

int ConstraintPolyhedron::most_violated_row(const Eigen::VectorXd& p) const {
  if (num_rows_ == 0) return -1;
  Eigen::Index idx = 0;
  (apply(p) - rhs()).maxCoeff(&idx);
  return static_cast<int>(idx);
}

ConstraintPolyhedron assemble_home_polyhedron(std::vector<ConstraintBlock> blocks) {
  if (blocks.empty()) throw std::invalid_argument("a home needs at least one appliance block");
  const int horizon = blocks.front().horizon();
  return ConstraintPolyhedron(horizon, std::move(blocks));
}

}  // namespace pricecoord
