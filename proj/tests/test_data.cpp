#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "surrogate/surrogate.hpp"

using namespace surrogate;

namespace {

template <class F>
ErrorKind kind_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorKind::study;
}

template <class F>
std::string message_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

Matrix random_matrix(std::mt19937_64& rng, Eigen::Index n, Eigen::Index m) {
  std::normal_distribution<double> z;
  Matrix out(n, m);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < m; ++j) out(i, j) = z(rng);
  }
  return out;
}

}  // namespace

TEST(Samples, ExperimentalAccessors) {
  Vector w(4);
  w << 1, 0, 1, 1;
  Matrix s(4, 2);
  s << 1, 2, 3, 4, 5, 6, 7, 8;
  ExperimentalSample e(w, s);
  EXPECT_EQ(e.size(), 4);
  EXPECT_EQ(e.n_surrogates(), 2);
  EXPECT_EQ(e.n_covariates(), 0);
  EXPECT_EQ(e.x().rows(), 4);
  EXPECT_EQ(e.n_treated(), 3);
  EXPECT_EQ(e.n_control(), 1);
}

TEST(Samples, RejectsNonBinaryTreatment) {
  Vector w(3);
  w << 1, 0, 2;
  EXPECT_EQ(kind_of([&] { ExperimentalSample(w, Matrix::Ones(3, 1)); }), ErrorKind::validation);
}

TEST(Samples, RequiresBothArms) {
  EXPECT_EQ(kind_of([] { ExperimentalSample(Vector::Ones(3), Matrix::Ones(3, 1)); }),
            ErrorKind::validation);
  EXPECT_EQ(kind_of([] { SingleSample(Vector::Zero(3), Vector::Ones(3), Matrix::Ones(3, 1)); }),
            ErrorKind::validation);
}

TEST(Samples, RejectsRowMismatchAndNonFinite) {
  Vector w(3);
  w << 1, 0, 1;
  EXPECT_EQ(kind_of([&] { ExperimentalSample(w, Matrix::Ones(2, 1)); }), ErrorKind::validation);
  Matrix s = Matrix::Ones(3, 1);
  s(1, 0) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_EQ(kind_of([&] { ExperimentalSample(w, s); }), ErrorKind::validation);
  Vector y = Vector::Ones(3);
  y(2) = std::numeric_limits<double>::infinity();
  EXPECT_EQ(kind_of([&] { ObservationalSample(y, Matrix::Ones(3, 1)); }), ErrorKind::validation);
  EXPECT_EQ(kind_of([] { ObservationalSample(Vector(0), Matrix(0, 1)); }), ErrorKind::validation);
  EXPECT_EQ(kind_of([] { ObservationalSample(Vector::Ones(2), Matrix(2, 0)); }),
            ErrorKind::validation);
}

TEST(Pooled, LabelsAndStacking) {
  Vector w(2);
  w << 1, 0;
  Matrix se(2, 1), so(3, 1);
  se << 1, 2;
  so << 3, 4, 5;
  PooledDataset p(ExperimentalSample(w, se), ObservationalSample(Vector::Zero(3), so));
  EXPECT_EQ(p.size(), 5);
  EXPECT_DOUBLE_EQ(p.q(), 0.4);
  EXPECT_EQ(p.label(1), SampleLabel::experimental);
  EXPECT_EQ(p.label(2), SampleLabel::observational);
  Vector ind(5);
  ind << 1, 1, 0, 0, 0;
  EXPECT_EQ(p.experimental_indicator(), ind);
  Matrix stacked(5, 1);
  stacked << 1, 2, 3, 4, 5;
  EXPECT_EQ(p.stacked_surrogates(), stacked);
  EXPECT_EQ(p.stacked_covariates().cols(), 0);
}

TEST(Pooled, DimensionMismatchIsPoolingError) {
  Vector w(2);
  w << 1, 0;
  ExperimentalSample e(w, Matrix::Ones(2, 2));
  ObservationalSample o(Vector::Zero(2), Matrix::Ones(2, 3));
  EXPECT_EQ(kind_of([&] { pool(e, o); }), ErrorKind::pooling);
  ObservationalSample ox(Vector::Zero(2), Matrix::Ones(2, 2), Matrix::Ones(2, 1));
  EXPECT_EQ(kind_of([&] { pool(e, ox); }), ErrorKind::pooling);
}

TEST(Loading, InfersSchemaFromHeader) {
  std::istringstream in("w,s1,s2,x1\n1,0.5,1.5,2\n0,-1,2,3\n");
  const auto e = load_experimental(in);
  EXPECT_EQ(e.n_surrogates(), 2);
  EXPECT_EQ(e.n_covariates(), 1);
  EXPECT_DOUBLE_EQ(e.s()(1, 0), -1.0);
  EXPECT_DOUBLE_EQ(e.x()(1, 0), 3.0);
}

TEST(Loading, ExplicitSchema) {
  std::istringstream in("treat,a,b\n1,1,2\n0,3,4\n");
  Schema schema;
  schema.treatment = "treat";
  schema.surrogates = {"b"};
  const auto e = load_experimental(in, schema);
  EXPECT_EQ(e.n_surrogates(), 1);
  EXPECT_DOUBLE_EQ(e.s()(1, 0), 4.0);
}

TEST(Loading, TreatmentErrorNamesRowAndLine) {
  std::istringstream in("w,s1\n1,0\n\n2,1\n0,1\n");
  const std::string msg = message_of([&] { load_experimental(in); });
  EXPECT_NE(msg.find("treatment value 2 at row 2 (line 4) is not 0 or 1"), std::string::npos) << msg;
}

TEST(Loading, MalformedAndMissingCells) {
  {
    std::istringstream in("y,s1\n1,abc\n");
    const std::string msg = message_of([&] { load_observational(in); });
    EXPECT_NE(msg.find("malformed number 'abc' at row 1 (line 2), column 's1'"), std::string::npos)
        << msg;
  }
  {
    std::istringstream in("y,s1\n1,\n");
    EXPECT_EQ(kind_of([&] { load_observational(in); }), ErrorKind::validation);
  }
  {
    std::istringstream in("y,s1\n1,inf\n");
    EXPECT_EQ(kind_of([&] { load_observational(in); }), ErrorKind::validation);
  }
  {
    std::istringstream in("y,s1\n1,2,3\n");
    EXPECT_EQ(kind_of([&] { load_observational(in); }), ErrorKind::validation);
  }
}

TEST(Loading, SchemaErrors) {
  {
    std::istringstream in("y,a\n1,2\n");
    EXPECT_EQ(kind_of([&] { load_observational(in); }), ErrorKind::schema);
  }
  {
    std::istringstream in("s1\n1\n");
    EXPECT_EQ(kind_of([&] { load_observational(in); }), ErrorKind::schema);
  }
  {
    std::istringstream in("");
    EXPECT_EQ(kind_of([&] { load_single(in); }), ErrorKind::schema);
  }
  EXPECT_EQ(kind_of([] { load_single(std::string("/nonexistent/file.csv")); }), ErrorKind::io);
}

TEST(Loading, QuotedFieldsAndBom) {
  std::istringstream in("\xEF\xBB\xBFy,\"s1\"\n\"1.5\",2\n");
  const auto o = load_observational(in);
  EXPECT_DOUBLE_EQ(o.y()(0), 1.5);
}

// load(write(sample)) reproduces every sample exactly.
TEST(Loading, RoundTripIsBitExact) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::Index n = 3 + trial;
    const Eigen::Index m = 1 + trial % 3;
    const Eigen::Index k = trial % 3;
    Vector w(n);
    for (Eigen::Index i = 0; i < n; ++i) w(i) = i % 2;
    const Vector y = random_matrix(rng, n, 1).col(0) * 1e-7;
    const Matrix s = random_matrix(rng, n, m) * 1e5;
    const Matrix x = random_matrix(rng, n, k);

    const ExperimentalSample e(w, s, x);
    std::stringstream be;
    write(be, e);
    EXPECT_EQ(load_experimental(be), e);

    const ObservationalSample o(y, s, x);
    std::stringstream bo;
    write(bo, o);
    EXPECT_EQ(load_observational(bo), o);

    const SingleSample ss(w, y, s, x);
    std::stringstream bs;
    write(bs, ss);
    EXPECT_EQ(load_single(bs), ss);
  }
}

TEST(Csv, ShortestRoundTrip) {
  for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 12345678.9, 0.0}) {
    double back = 0.0;
    ASSERT_TRUE(csv::parse_double(csv::format_double(v), back));
    EXPECT_EQ(back, v);
  }
  EXPECT_EQ(csv::format_double(0.5), "0.5");
  EXPECT_EQ(csv::format_fixed(2.0 / 3.0, 3), "0.667");
  double out = 0.0;
  EXPECT_FALSE(csv::parse_double("1.0x", out));
  EXPECT_FALSE(csv::parse_double("", out));
  EXPECT_TRUE(csv::parse_double("+2", out));
  EXPECT_EQ(out, 2.0);
}

TEST(Seeds, DeriveSeedIsFixed) {
  EXPECT_EQ(derive_seed(1, 0), mix64(mix64(1) ^ 1));
  EXPECT_NE(derive_seed(1, 0), derive_seed(1, 1));
  EXPECT_NE(derive_seed(1, 0), derive_seed(2, 0));
  // SplitMix64 reference output for state 0 after one increment.
  EXPECT_EQ(mix64(0), 0xE220A8397B1DCDAFull);
}

TEST(Parallel, EveryIndexOnceAndErrorsPropagate) {
  std::vector<int> hits(1000, 0);
  parallel_for(hits.size(), 8, [&](std::size_t i) { hits[i] += 1; });
  for (int h : hits) EXPECT_EQ(h, 1);
  EXPECT_THROW(parallel_for(100, 4,
                            [](std::size_t i) {
                              if (i == 37) fail(ErrorKind::study, "boom");
                            }),
               Error);
}
