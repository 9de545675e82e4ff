#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "surrogate/csv.hpp"
#include "surrogate/error.hpp"

namespace surrogate {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

namespace detail {

inline Matrix empty_columns_if_default(Matrix x, Eigen::Index rows) {
  if (x.rows() == 0 && x.cols() == 0) return Matrix(rows, 0);
  return x;
}

inline bool same(const Matrix& a, const Matrix& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() && (a.array() == b.array()).all();
}

inline bool same(const Vector& a, const Vector& b) {
  return a.size() == b.size() && (a.array() == b.array()).all();
}

inline void require_finite(const Matrix& m, const char* what) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (!std::isfinite(m(i, j))) {
        fail(ErrorKind::validation, std::string("non-finite ") + what + " value at row " +
                                        std::to_string(i + 1) + ", column " +
                                        std::to_string(j + 1));
      }
    }
  }
}

inline void require_finite(const Vector& v, const char* what) {
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v(i))) {
      fail(ErrorKind::validation,
           std::string("non-finite ") + what + " value at row " + std::to_string(i + 1));
    }
  }
}

/// Validates a treatment vector: binary and both arms present.
inline void require_treatment(const Vector& w) {
  Eigen::Index treated = 0;
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    if (w(i) != 0.0 && w(i) != 1.0) {
      fail(ErrorKind::validation, "treatment value at row " + std::to_string(i + 1) +
                                      " is not 0 or 1");
    }
    treated += w(i) == 1.0;
  }
  if (treated == 0 || treated == w.size()) {
    fail(ErrorKind::validation, "both treated and control units are required");
  }
}

inline void require_rows(Eigen::Index expected, Eigen::Index got, const char* what) {
  if (expected != got) {
    fail(ErrorKind::validation, std::string(what) + " has " + std::to_string(got) +
                                    " rows, expected " + std::to_string(expected));
  }
}

}  // namespace detail

/// Experimental sample of the two-sample design: treatment W, surrogates S
/// (N_E x M) and pre-treatment covariates X (N_E x K, K may be 0).
class ExperimentalSample {
 public:
  ExperimentalSample(Vector w, Matrix s, Matrix x = Matrix())
      : w_(std::move(w)), s_(std::move(s)),
        x_(detail::empty_columns_if_default(std::move(x), w_.size())) {
    detail::require_rows(w_.size(), s_.rows(), "surrogate matrix");
    detail::require_rows(w_.size(), x_.rows(), "covariate matrix");
    if (s_.cols() < 1) fail(ErrorKind::validation, "at least one surrogate is required");
    detail::require_treatment(w_);
    detail::require_finite(s_, "surrogate");
    detail::require_finite(x_, "covariate");
  }

  const Vector& w() const noexcept { return w_; }
  const Matrix& s() const noexcept { return s_; }
  const Matrix& x() const noexcept { return x_; }
  Eigen::Index size() const noexcept { return w_.size(); }
  Eigen::Index n_surrogates() const noexcept { return s_.cols(); }
  Eigen::Index n_covariates() const noexcept { return x_.cols(); }
  Eigen::Index n_treated() const { return static_cast<Eigen::Index>(w_.sum()); }
  Eigen::Index n_control() const { return size() - n_treated(); }

  friend bool operator==(const ExperimentalSample& a, const ExperimentalSample& b) {
    return detail::same(a.w_, b.w_) && detail::same(a.s_, b.s_) && detail::same(a.x_, b.x_);
  }

 private:
  Vector w_;
  Matrix s_;
  Matrix x_;
};

/// Observational sample of the two-sample design: outcome Y, surrogates S, covariates X.
class ObservationalSample {
 public:
  ObservationalSample(Vector y, Matrix s, Matrix x = Matrix())
      : y_(std::move(y)), s_(std::move(s)),
        x_(detail::empty_columns_if_default(std::move(x), y_.size())) {
    detail::require_rows(y_.size(), s_.rows(), "surrogate matrix");
    detail::require_rows(y_.size(), x_.rows(), "covariate matrix");
    if (y_.size() == 0) fail(ErrorKind::validation, "observational sample is empty");
    if (s_.cols() < 1) fail(ErrorKind::validation, "at least one surrogate is required");
    detail::require_finite(y_, "outcome");
    detail::require_finite(s_, "surrogate");
    detail::require_finite(x_, "covariate");
  }

  const Vector& y() const noexcept { return y_; }
  const Matrix& s() const noexcept { return s_; }
  const Matrix& x() const noexcept { return x_; }
  Eigen::Index size() const noexcept { return y_.size(); }
  Eigen::Index n_surrogates() const noexcept { return s_.cols(); }
  Eigen::Index n_covariates() const noexcept { return x_.cols(); }

  friend bool operator==(const ObservationalSample& a, const ObservationalSample& b) {
    return detail::same(a.y_, b.y_) && detail::same(a.s_, b.s_) && detail::same(a.x_, b.x_);
  }

 private:
  Vector y_;
  Matrix s_;
  Matrix x_;
};

/// Single-sample design: W, Y, S and X all observed on the same units.
class SingleSample {
 public:
  SingleSample(Vector w, Vector y, Matrix s, Matrix x = Matrix())
      : w_(std::move(w)), y_(std::move(y)), s_(std::move(s)),
        x_(detail::empty_columns_if_default(std::move(x), w_.size())) {
    detail::require_rows(w_.size(), y_.size(), "outcome vector");
    detail::require_rows(w_.size(), s_.rows(), "surrogate matrix");
    detail::require_rows(w_.size(), x_.rows(), "covariate matrix");
    if (s_.cols() < 1) fail(ErrorKind::validation, "at least one surrogate is required");
    detail::require_treatment(w_);
    detail::require_finite(y_, "outcome");
    detail::require_finite(s_, "surrogate");
    detail::require_finite(x_, "covariate");
  }

  const Vector& w() const noexcept { return w_; }
  const Vector& y() const noexcept { return y_; }
  const Matrix& s() const noexcept { return s_; }
  const Matrix& x() const noexcept { return x_; }
  Eigen::Index size() const noexcept { return w_.size(); }
  Eigen::Index n_surrogates() const noexcept { return s_.cols(); }
  Eigen::Index n_covariates() const noexcept { return x_.cols(); }
  Eigen::Index n_treated() const { return static_cast<Eigen::Index>(w_.sum()); }
  Eigen::Index n_control() const { return size() - n_treated(); }

  friend bool operator==(const SingleSample& a, const SingleSample& b) {
    return detail::same(a.w_, b.w_) && detail::same(a.y_, b.y_) && detail::same(a.s_, b.s_) &&
           detail::same(a.x_, b.x_);
  }

 private:
  Vector w_;
  Vector y_;
  Matrix s_;
  Matrix x_;
};

enum class SampleLabel { experimental, observational };

/// Both samples viewed as one data set of N_E + N_O rows, experimental rows
/// first. q = N_E / (N_E + N_O) is always derived from the realized sizes.
class PooledDataset {
 public:
  PooledDataset(ExperimentalSample exp, ObservationalSample obs)
      : exp_(std::move(exp)), obs_(std::move(obs)) {
    if (exp_.n_surrogates() != obs_.n_surrogates()) {
      fail(ErrorKind::pooling, "surrogate dimension mismatch: experimental M=" +
                                   std::to_string(exp_.n_surrogates()) + ", observational M=" +
                                   std::to_string(obs_.n_surrogates()));
    }
    if (exp_.n_covariates() != obs_.n_covariates()) {
      fail(ErrorKind::pooling, "covariate dimension mismatch: experimental K=" +
                                   std::to_string(exp_.n_covariates()) + ", observational K=" +
                                   std::to_string(obs_.n_covariates()));
    }
  }

  const ExperimentalSample& experimental() const noexcept { return exp_; }
  const ObservationalSample& observational() const noexcept { return obs_; }

  Eigen::Index size() const noexcept { return exp_.size() + obs_.size(); }
  Eigen::Index n_surrogates() const noexcept { return exp_.n_surrogates(); }
  Eigen::Index n_covariates() const noexcept { return exp_.n_covariates(); }

  double q() const noexcept {
    return static_cast<double>(exp_.size()) / static_cast<double>(size());
  }

  SampleLabel label(Eigen::Index row) const noexcept {
    return row < exp_.size() ? SampleLabel::experimental : SampleLabel::observational;
  }

  /// Indicator of P = E for every pooled row.
  Vector experimental_indicator() const {
    Vector p = Vector::Zero(size());
    p.head(exp_.size()).setOnes();
    return p;
  }

  Matrix stacked_surrogates() const {
    Matrix s(size(), n_surrogates());
    s << exp_.s(), obs_.s();
    return s;
  }

  Matrix stacked_covariates() const {
    Matrix x(size(), n_covariates());
    if (n_covariates() > 0) x << exp_.x(), obs_.x();
    return x;
  }

 private:
  ExperimentalSample exp_;
  ObservationalSample obs_;
};

inline PooledDataset pool(const ExperimentalSample& exp, const ObservationalSample& obs) {
  return PooledDataset(exp, obs);
}

/// Column mapping for file ingestion.
struct Schema {
  std::string treatment = "w";
  std::string outcome = "y";
  std::vector<std::string> surrogates;
  std::vector<std::string> covariates;

  /// Default mapping from a header: columns named s<digits> are surrogates and
  /// x<digits> are covariates, in header order.
  static Schema infer(const std::vector<std::string>& header) {
    Schema schema;
    auto indexed = [](const std::string& name, char prefix) {
      if (name.size() < 2 || name[0] != prefix) return false;
      for (std::size_t i = 1; i < name.size(); ++i) {
        if (name[i] < '0' || name[i] > '9') return false;
      }
      return true;
    };
    for (const auto& h : header) {
      if (indexed(h, 's')) schema.surrogates.push_back(h);
      if (indexed(h, 'x')) schema.covariates.push_back(h);
    }
    return schema;
  }

  static Schema canonical(Eigen::Index m, Eigen::Index k) {
    Schema schema;
    for (Eigen::Index j = 0; j < m; ++j) schema.surrogates.push_back("s" + std::to_string(j + 1));
    for (Eigen::Index j = 0; j < k; ++j) schema.covariates.push_back("x" + std::to_string(j + 1));
    return schema;
  }
};

namespace detail {

inline double cell_value(const csv::Table& table, std::size_t row, std::size_t col) {
  const std::string& text = table.rows[row][col];
  const std::string where = "row " + std::to_string(row + 1) + " (line " +
                            std::to_string(table.line_numbers[row]) + "), column '" +
                            table.header[col] + "'";
  if (text.empty()) fail(ErrorKind::validation, "missing cell at " + where);
  double value = 0.0;
  if (!csv::parse_double(text, value)) {
    fail(ErrorKind::validation, "malformed number '" + text + "' at " + where);
  }
  if (!std::isfinite(value)) fail(ErrorKind::validation, "non-finite value at " + where);
  return value;
}

inline Vector read_vector(const csv::Table& table, const std::string& name) {
  const std::size_t col = table.column(name);
  Vector v(static_cast<Eigen::Index>(table.rows.size()));
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    v(static_cast<Eigen::Index>(i)) = cell_value(table, i, col);
  }
  return v;
}

inline Matrix read_matrix(const csv::Table& table, const std::vector<std::string>& names) {
  std::vector<std::size_t> cols;
  for (const auto& name : names) cols.push_back(table.column(name));
  Matrix m(static_cast<Eigen::Index>(table.rows.size()), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    for (std::size_t j = 0; j < cols.size(); ++j) {
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          cell_value(table, i, cols[j]);
    }
  }
  return m;
}

inline Vector read_treatment(const csv::Table& table, const std::string& name) {
  Vector w = read_vector(table, name);
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    if (w(i) != 0.0 && w(i) != 1.0) {
      fail(ErrorKind::validation,
           "treatment value " + table.rows[static_cast<std::size_t>(i)][table.column(name)] +
               " at row " + std::to_string(i + 1) + " (line " +
               std::to_string(table.line_numbers[static_cast<std::size_t>(i)]) +
               ") is not 0 or 1");
    }
  }
  return w;
}

inline void require_surrogate_columns(const Schema& schema) {
  if (schema.surrogates.empty()) {
    fail(ErrorKind::schema, "schema names no surrogate columns");
  }
}

inline void write_header(std::ostream& out, std::vector<std::string> leading, const Schema& schema) {
  leading.insert(leading.end(), schema.surrogates.begin(), schema.surrogates.end());
  leading.insert(leading.end(), schema.covariates.begin(), schema.covariates.end());
  csv::write_row(out, leading);
}

inline void append_row(std::vector<std::string>& fields, const Matrix& s, const Matrix& x,
                       Eigen::Index i) {
  for (Eigen::Index j = 0; j < s.cols(); ++j) fields.push_back(csv::format_double(s(i, j)));
  for (Eigen::Index j = 0; j < x.cols(); ++j) fields.push_back(csv::format_double(x(i, j)));
}

inline std::ofstream open_output(const std::string& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::io, "cannot write '" + path + "'");
  return out;
}

}  // namespace detail

inline ExperimentalSample load_experimental(std::istream& in, const std::optional<Schema>& schema = {}) {
  const csv::Table table = csv::read(in);
  const Schema cols = schema ? *schema : Schema::infer(table.header);
  detail::require_surrogate_columns(cols);
  if (table.rows.empty()) fail(ErrorKind::validation, "experimental file has no data rows");
  return ExperimentalSample(detail::read_treatment(table, cols.treatment),
                            detail::read_matrix(table, cols.surrogates),
                            detail::read_matrix(table, cols.covariates));
}

inline ObservationalSample load_observational(std::istream& in, const std::optional<Schema>& schema = {}) {
  const csv::Table table = csv::read(in);
  const Schema cols = schema ? *schema : Schema::infer(table.header);
  detail::require_surrogate_columns(cols);
  if (table.rows.empty()) fail(ErrorKind::validation, "observational file has no data rows");
  return ObservationalSample(detail::read_vector(table, cols.outcome),
                             detail::read_matrix(table, cols.surrogates),
                             detail::read_matrix(table, cols.covariates));
}

inline SingleSample load_single(std::istream& in, const std::optional<Schema>& schema = {}) {
  const csv::Table table = csv::read(in);
  const Schema cols = schema ? *schema : Schema::infer(table.header);
  detail::require_surrogate_columns(cols);
  if (table.rows.empty()) fail(ErrorKind::validation, "single-sample file has no data rows");
  return SingleSample(detail::read_treatment(table, cols.treatment),
                      detail::read_vector(table, cols.outcome),
                      detail::read_matrix(table, cols.surrogates),
                      detail::read_matrix(table, cols.covariates));
}

inline ExperimentalSample load_experimental(const std::string& path, const std::optional<Schema>& schema = {}) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open '" + path + "'");
  return load_experimental(in, schema);
}

inline ObservationalSample load_observational(const std::string& path, const std::optional<Schema>& schema = {}) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open '" + path + "'");
  return load_observational(in, schema);
}

inline SingleSample load_single(const std::string& path, const std::optional<Schema>& schema = {}) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open '" + path + "'");
  return load_single(in, schema);
}

/// Writers emit the canonical header (w|y, s1..sM, x1..xK) and shortest
/// round-trip number text, so load(write(sample)) == sample bit for bit.
inline void write(std::ostream& out, const ExperimentalSample& sample) {
  detail::write_header(out, {"w"}, Schema::canonical(sample.n_surrogates(), sample.n_covariates()));
  for (Eigen::Index i = 0; i < sample.size(); ++i) {
    std::vector<std::string> fields{sample.w()(i) == 1.0 ? "1" : "0"};
    detail::append_row(fields, sample.s(), sample.x(), i);
    csv::write_row(out, fields);
  }
}

inline void write(std::ostream& out, const ObservationalSample& sample) {
  detail::write_header(out, {"y"}, Schema::canonical(sample.n_surrogates(), sample.n_covariates()));
  for (Eigen::Index i = 0; i < sample.size(); ++i) {
    std::vector<std::string> fields{csv::format_double(sample.y()(i))};
    detail::append_row(fields, sample.s(), sample.x(), i);
    csv::write_row(out, fields);
  }
}

inline void write(std::ostream& out, const SingleSample& sample) {
  detail::write_header(out, {"w", "y"},
                       Schema::canonical(sample.n_surrogates(), sample.n_covariates()));
  for (Eigen::Index i = 0; i < sample.size(); ++i) {
    std::vector<std::string> fields{sample.w()(i) == 1.0 ? "1" : "0",
                                    csv::format_double(sample.y()(i))};
    detail::append_row(fields, sample.s(), sample.x(), i);
    csv::write_row(out, fields);
  }
}

template <class Sample>
void write_file(const std::string& path, const Sample& sample) {
  auto out = detail::open_output(path);
  write(out, sample);
}

}  // namespace surrogate
