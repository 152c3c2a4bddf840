#pragma once

#include <Eigen/Dense>
#include <iosfwd>
#include <string>

namespace caplab {

// D x N embedding matrix. Rows are embedding dimensions, column i is the
// embedding vector W_i of feature i. Entries are validated to be finite.
class EmbeddingMatrix {
 public:
  explicit EmbeddingMatrix(Eigen::MatrixXd entries);

  int dim() const { return static_cast<int>(entries_.rows()); }       // D
  int features() const { return static_cast<int>(entries_.cols()); }  // N

  const Eigen::MatrixXd& mat() const { return entries_; }

  // Column i (bounds-checked).
  Eigen::VectorXd feature(int i) const;

  // Gram matrix G = W^T W.
  Eigen::MatrixXd gram() const { return entries_.transpose() * entries_; }

 private:
  Eigen::MatrixXd entries_;
};

// CSV exchange format: first line "D,N", then D rows of N comma-separated
// values. Numbers are written with 12 significant digits.
EmbeddingMatrix read_matrix_csv(std::istream& in);
EmbeddingMatrix read_matrix_csv_file(const std::string& path);
void write_matrix_csv(const EmbeddingMatrix& w, std::ostream& out);
void write_matrix_csv_file(const EmbeddingMatrix& w, const std::string& path);

// "%.12g" formatting used for all numeric text output.
std::string format_g12(double x);

}  // namespace caplab
