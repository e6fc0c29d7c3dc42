#include "foodprice/data_ingest.hpp"
#include "foodprice/random.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cstring>
#include <functional>
#include <cmath>
#include <set>
#include <sstream>

using namespace foodprice;

namespace {

IndicatorTable parse(const std::string& text, const std::string& target = "FFPI") {
  std::istringstream in(text);
  return load_table(in, target);
}

std::string year_panel(int first, int last) {
  std::ostringstream os;
  os << "year,FFPI,SP.POP.TOTL\n";
  for (int y = first; y <= last; ++y) os << y << ',' << 90 + (y - first) << ',' << 6.1 + 0.1 * (y - first) << '\n';
  return os.str();
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an exception";
  return ErrorCode::io;
}

IndicatorTable column_table(const std::vector<double>& v, const std::vector<bool>& missing) {
  IndicatorTable t;
  t.feature_names = {"x"};
  const auto n = static_cast<Index>(v.size());
  t.target = Vector::LinSpaced(n, 1, static_cast<double>(n));
  t.values.resize(n, 1);
  t.missing_mask.resize(n, 1);
  for (Index i = 0; i < n; ++i) {
    t.years.push_back(2000 + static_cast<int>(i));
    t.values(i, 0) = missing[i] ? std::nan("") : v[i];
    t.missing_mask(i, 0) = missing[i];
  }
  return t;
}

}  // namespace

TEST(LoadTable, ReadsSchemaAndRows) {
  const auto t = parse(year_panel(2000, 2022));
  EXPECT_EQ(t.rows(), 23);
  EXPECT_EQ(t.features(), 1);
  EXPECT_EQ(t.feature_names[0], "SP.POP.TOTL");
  EXPECT_EQ(t.years.front(), 2000);
  EXPECT_EQ(t.years.back(), 2022);
  EXPECT_DOUBLE_EQ(t.target[3], 93.0);
  EXPECT_FALSE(t.has_missing());
}

TEST(LoadTable, MissingTargetColumnNamesIt) {
  try {
    parse("year,SP.POP.TOTL\n2000,1\n");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::schema);
    EXPECT_NE(std::string(e.what()).find("FFPI"), std::string::npos);
  }
}

TEST(LoadTable, MissingYearColumn) {
  EXPECT_EQ(code_of([] { parse("FFPI,a\n1,2\n"); }), ErrorCode::schema);
}

TEST(LoadTable, DuplicateYear) {
  EXPECT_EQ(code_of([] { parse("year,FFPI,a\n2000,1,2\n2001,1,2\n2000,3,4\n"); }), ErrorCode::duplicate_row);
}

TEST(LoadTable, DuplicateColumn) {
  EXPECT_EQ(code_of([] { parse("year,FFPI,a,a\n2000,1,2,3\n"); }), ErrorCode::schema);
}

TEST(LoadTable, ParseErrorCarriesCoordinates) {
  try {
    parse("year,FFPI,EN.ATM.CO2E.PC\n2000,1,2\n2003,1,abc\n");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::parse);
    const std::string msg = e.what();
    EXPECT_NE(msg.find("2003"), std::string::npos);
    EXPECT_NE(msg.find("EN.ATM.CO2E.PC"), std::string::npos);
  }
}

TEST(LoadTable, MissingTokensAreMasked) {
  const auto t = parse("year,FFPI,a,b,c,d\n2000,1,,NA,NaN,..\n2001,2,1,2,3,4\n");
  for (Index j = 0; j < 4; ++j) {
    EXPECT_TRUE(t.missing_mask(0, j));
    EXPECT_FALSE(t.missing_mask(1, j));
  }
}

TEST(LoadTable, DotMissingThenImputeFillsExactlyMaskedCells) {
  const auto t = parse(
      "year,FFPI,EN.ATM.CO2E.PC,SP.POP.TOTL\n"
      "2001,1,4.0,10\n2002,2,4.2,11\n2003,3,..,12\n2004,4,4.6,13\n2005,5,4.8,14\n");
  ASSERT_TRUE(t.missing_mask(2, 0));
  EXPECT_EQ(t.missing_mask.count(), 1);
  const auto filled = impute(t);
  EXPECT_FALSE(filled.has_missing());
  for (Index i = 0; i < t.rows(); ++i)
    for (Index j = 0; j < t.features(); ++j)
      if (!t.missing_mask(i, j)) EXPECT_EQ(filled.values(i, j), t.values(i, j));
  EXPECT_NEAR(filled.values(2, 0), 4.4, 1e-12);
}

TEST(LoadTable, QuotedFieldsAndLocaleIndependentDecimals) {
  const auto t = parse("\"year\",\"FFPI\",\"a,b\"\n2000,\"1.5\",2.25\n");
  EXPECT_EQ(t.feature_names[0], "a,b");
  EXPECT_DOUBLE_EQ(t.target[0], 1.5);
  EXPECT_DOUBLE_EQ(t.values(0, 0), 2.25);
  EXPECT_EQ(code_of([] { parse("year,FFPI,a\n2000,1,\"2,5\"\n"); }), ErrorCode::parse);
}

TEST(LoadTable, RowsSortedByYear) {
  const auto t = parse("year,FFPI,a\n2002,3,1\n2000,1,2\n2001,2,3\n");
  EXPECT_EQ(t.years, (std::vector<int>{2000, 2001, 2002}));
  EXPECT_DOUBLE_EQ(t.values(0, 0), 2.0);
}

TEST(LoadTable, CustomTargetColumn) {
  const auto t = parse("year,price,FFPI\n2000,5,1\n", "price");
  EXPECT_EQ(t.target_name, "price");
  EXPECT_EQ(t.feature_names, std::vector<std::string>{"FFPI"});
}

TEST(LoadTable, BundledFixture) {
  const auto t = load_table(std::string(FOODPRICE_DATA_DIR) + "/fixture.csv");
  EXPECT_EQ(t.rows(), 23);
  EXPECT_EQ(t.features(), 104);
  EXPECT_TRUE(t.has_missing());
  EXPECT_FALSE(impute(t).has_missing());
}

TEST(Impute, Midpoint) {
  const auto t = impute(column_table({1, 0, 3}, {false, true, false}));
  EXPECT_DOUBLE_EQ(t.values(1, 0), 2.0);
}

TEST(Impute, BoundaryExtension) {
  const auto t = impute(column_table({0, 5, 5, 0}, {true, false, false, true}));
  for (Index i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(t.values(i, 0), 5.0);
}

TEST(Impute, TwoGapInterpolation) {
  const auto t = impute(column_table({2, 0, 0, 8}, {false, true, true, false}));
  EXPECT_DOUBLE_EQ(t.values(1, 0), 4.0);
  EXPECT_DOUBLE_EQ(t.values(2, 0), 6.0);
}

TEST(Impute, UsesYearSpacing) {
  auto t = column_table({0, 0, 10}, {false, true, false});
  t.years = {2000, 2001, 2010};
  EXPECT_DOUBLE_EQ(impute(t).values(1, 0), 1.0);
}

TEST(Impute, EmptyColumnIsNamed) {
  try {
    impute(column_table({0, 0}, {true, true}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::empty_column);
    EXPECT_NE(std::string(e.what()).find("'x'"), std::string::npos);
  }
}

TEST(Impute, IdempotentAndPreservesObserved) {
  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 3 + static_cast<int>(rng.below(20));
    std::vector<double> v(n);
    std::vector<bool> miss(n);
    bool any_observed = false;
    for (int i = 0; i < n; ++i) {
      v[i] = rng.normal();
      miss[i] = rng.uniform() < 0.4;
      any_observed = any_observed || !miss[i];
    }
    if (!any_observed) miss[0] = false;
    const auto t = column_table(v, miss);
    const auto once = impute(t);
    const auto twice = impute(once);
    for (int i = 0; i < n; ++i) {
      EXPECT_EQ(std::memcmp(&once.values(i, 0), &twice.values(i, 0), sizeof(double)), 0);
      if (!miss[i]) EXPECT_EQ(once.values(i, 0), v[i]);
    }
  }
}

TEST(Split, TwentyThreeRowCounts) {
  const auto t = parse(year_panel(2000, 2022));
  const auto s = split(t, 0.8, 42);
  EXPECT_EQ(s.train_indices.size(), 18u);
  EXPECT_EQ(s.test_indices.size(), 5u);
  EXPECT_EQ(s.train_x.rows(), 18);
  EXPECT_EQ(s.test_y.size(), 5);
}

TEST(Split, Deterministic) {
  const auto t = parse(year_panel(2000, 2022));
  const auto a = split(t, 0.8, 42);
  const auto b = split(t, 0.8, 42);
  EXPECT_EQ(a.train_indices, b.train_indices);
  EXPECT_EQ(a.test_indices, b.test_indices);
  const auto c = split(t, 0.8, 43);
  EXPECT_NE(a.train_indices, c.train_indices);
}

TEST(Split, CoverageProperty) {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 5 + static_cast<int>(rng.below(60));
    const auto seed = rng.next();
    const auto t = parse(year_panel(1950, 1950 + n - 1));
    const auto s = split(t, 0.8, seed);
    std::set<Index> all(s.train_indices.begin(), s.train_indices.end());
    for (Index i : s.test_indices) EXPECT_TRUE(all.insert(i).second);
    EXPECT_EQ(static_cast<int>(all.size()), n);
    EXPECT_EQ(static_cast<Index>(s.train_indices.size()), static_cast<Index>(std::floor(0.8 * n + 1e-9)));
  }
}

TEST(Split, TenRowsAnySeed) {
  const auto t = parse(year_panel(2000, 2009));
  for (std::uint64_t seed : {0ull, 1ull, 42ull, 123456789ull}) {
    const auto s = split(t, 0.8, seed);
    EXPECT_EQ(s.train_indices.size(), 8u);
    EXPECT_EQ(s.test_indices.size(), 2u);
  }
}

TEST(Split, RowsCopiedFromTable) {
  const auto t = parse(year_panel(2000, 2010));
  const auto s = split(t, 0.7, 3);
  for (std::size_t i = 0; i < s.test_indices.size(); ++i)
    EXPECT_EQ(s.test_y[static_cast<Index>(i)], t.target[s.test_indices[i]]);
}

TEST(Split, TooFewRows) {
  EXPECT_EQ(code_of([] { split(parse(year_panel(2000, 2003)), 0.8, 42); }), ErrorCode::too_few_rows);
}

TEST(Scaler, SampleStd) {
  Matrix x(3, 1);
  x << 1, 2, 3;
  const auto s = fit_scaler(x);
  EXPECT_DOUBLE_EQ(s.means()[0], 2.0);
  EXPECT_DOUBLE_EQ(s.stds()[0], 1.0);
}

TEST(Scaler, ConstantColumnNamed) {
  Matrix x(3, 2);
  x << 1, 5, 2, 5, 3, 5;
  try {
    fit_scaler(x, {"a", "flat"});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::zero_variance);
    EXPECT_NE(std::string(e.what()).find("flat"), std::string::npos);
  }
}

TEST(Scaler, StandardizesTrainMatrix) {
  Rng rng(5);
  Matrix x(18, 30);
  for (Index i = 0; i < x.rows(); ++i)
    for (Index j = 0; j < x.cols(); ++j) x(i, j) = 100.0 * j + (j + 1) * rng.normal();
  const auto s = fit_scaler(x);
  EXPECT_EQ(s.means().size(), 30);
  const Matrix z = apply_scaler(s, x);
  for (Index j = 0; j < z.cols(); ++j) {
    const double m = z.col(j).mean();
    const double sd = std::sqrt((z.col(j).array() - m).square().sum() / (z.rows() - 1));
    EXPECT_LT(std::fabs(m), 1e-12);
    EXPECT_NEAR(sd, 1.0, 1e-12);
  }
}

TEST(Scaler, IdentityCases) {
  Matrix x(2, 3);
  x << 1, -2, 3, 4, 5, -6;
  const Scaler id(Vector::Zero(3), Vector::Ones(3));
  EXPECT_EQ(apply_scaler(id, x), x);
  const auto s = fit_scaler(x);
  const Matrix means_row = s.means().transpose();
  EXPECT_EQ(apply_scaler(s, means_row), Matrix::Zero(1, 3));
}

TEST(Scaler, RoundTrip) {
  Rng rng(9);
  Matrix x(12, 4);
  for (Index i = 0; i < x.rows(); ++i)
    for (Index j = 0; j < x.cols(); ++j) x(i, j) = std::pow(10.0, j) * (1.0 + rng.normal());
  const auto s = fit_scaler(x);
  const Matrix back = s.inverse_transform(s.transform(x));
  for (Index i = 0; i < x.rows(); ++i)
    for (Index j = 0; j < x.cols(); ++j) EXPECT_LE(std::fabs(back(i, j) - x(i, j)), 1e-12 * std::fabs(x(i, j)) + 1e-300);
}

TEST(Scaler, ShapeMismatch) {
  Matrix x(3, 2);
  x << 1, 2, 3, 4, 5, 7;
  const auto s = fit_scaler(x);
  EXPECT_EQ(code_of([&] { s.transform(Matrix::Zero(2, 3)); }), ErrorCode::shape);
}

TEST(Scaler, VectorVariant) {
  Vector y(4);
  y << 2, 4, 6, 8;
  const auto s = Scaler::fit_vector(y);
  const Vector z = s.transform_vector(y);
  EXPECT_NEAR(z.mean(), 0.0, 1e-15);
  EXPECT_EQ(s.inverse_vector(z), y);
}
