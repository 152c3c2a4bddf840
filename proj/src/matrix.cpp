#include "caplab/matrix.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <vector>

#include "caplab/errors.hpp"

namespace caplab {

EmbeddingMatrix::EmbeddingMatrix(Eigen::MatrixXd entries)
    : entries_(std::move(entries)) {
  if (entries_.rows() < 1 || entries_.cols() < 1) {
    throw DomainError("embedding matrix: need D >= 1 and N >= 1");
  }
  if (!entries_.allFinite()) {
    throw DomainError("embedding matrix: entries must be finite");
  }
}

Eigen::VectorXd EmbeddingMatrix::feature(int i) const {
  if (i < 0 || i >= features()) {
    throw DomainError("embedding matrix: feature index out of range");
  }
  return entries_.col(i);
}

std::string format_g12(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", x);
  return buf;
}

namespace {

std::vector<std::string> split_commas(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

double parse_double(const std::string& tok, const char* what) {
  try {
    size_t pos = 0;
    double v = std::stod(tok, &pos);
    while (pos < tok.size() && std::isspace(static_cast<unsigned char>(tok[pos]))) pos++;
    if (pos != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw IoError(std::string("matrix csv: bad ") + what + " '" + tok + "'");
  }
}

long parse_count(const std::string& tok, const char* what) {
  double v = parse_double(tok, what);
  long n = static_cast<long>(v);
  if (v != static_cast<double>(n) || n < 1) {
    throw IoError(std::string("matrix csv: ") + what + " must be a positive integer");
  }
  return n;
}

}  // namespace

EmbeddingMatrix read_matrix_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw IoError("matrix csv: empty input");
  auto header = split_commas(line);
  if (header.size() != 2) throw IoError("matrix csv: header must be 'D,N'");
  const long d = parse_count(header[0], "row count D");
  const long n = parse_count(header[1], "column count N");

  Eigen::MatrixXd m(d, n);
  for (long r = 0; r < d; r++) {
    if (!std::getline(in, line)) {
      throw IoError("matrix csv: expected " + std::to_string(d) + " rows, got " +
                    std::to_string(r));
    }
    auto toks = split_commas(line);
    if (static_cast<long>(toks.size()) != n) {
      throw IoError("matrix csv: row " + std::to_string(r) + " has " +
                    std::to_string(toks.size()) + " values, expected " + std::to_string(n));
    }
    for (long c = 0; c < n; c++) m(r, c) = parse_double(toks[c], "entry");
  }
  return EmbeddingMatrix(std::move(m));
}

EmbeddingMatrix read_matrix_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open matrix file '" + path + "'");
  return read_matrix_csv(in);
}

void write_matrix_csv(const EmbeddingMatrix& w, std::ostream& out) {
  out << w.dim() << "," << w.features() << "\n";
  for (int r = 0; r < w.dim(); r++) {
    for (int c = 0; c < w.features(); c++) {
      if (c) out << ",";
      out << format_g12(w.mat()(r, c));
    }
    out << "\n";
  }
}

void write_matrix_csv_file(const EmbeddingMatrix& w, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write matrix file '" + path + "'");
  write_matrix_csv(w, out);
  if (!out.good()) throw IoError("write failed for '" + path + "'");
}

}  // namespace caplab
