#include "mmjsd/verify.hpp"

#include <gtest/gtest.h>

#include <sstream>

using namespace mmjsd;

TEST(Verify, PoeGridPassesAndCatchesTamperedVariance) {
  EXPECT_TRUE(verify::poe_grid(20, 1).passed);
  const auto bad = verify::poe_grid(20, 1, verify::poe_variance_typo);
  EXPECT_FALSE(bad.passed);
  EXPECT_TRUE(bad.asserted);
}

TEST(Verify, TypoFormulaAgreesOnlyAtUnitVariance) {
  const std::vector<DiagGaussian> same{DiagGaussian::isotropic(1, 0.5, 1.0), DiagGaussian::isotropic(1, -1.0, 1.0)};
  const std::vector<double> w{0.5, 0.5};
  const auto a = verify::poe_variance_typo(same, w), b = poe_geometric_mean(same, w);
  EXPECT_NEAR(a.mean[0], b.mean[0], 1e-12);
  EXPECT_NEAR(a.log_var[0], b.log_var[0], 1e-12);
  const std::vector<DiagGaussian> mixed{DiagGaussian::isotropic(1, 0.5, 0.5), DiagGaussian::isotropic(1, -1.0, 4.0)};
  EXPECT_GT(std::abs(verify::poe_variance_typo(mixed, w).log_var[0] - poe_geometric_mean(mixed, w).log_var[0]), 0.1);
}

TEST(Verify, SmallPropertiesPass) {
  EXPECT_TRUE(verify::kl_closed_form(50, 20000, 2).passed);
  EXPECT_TRUE(verify::jensen_bound(30, 5000, 3).passed);
  EXPECT_TRUE(verify::worked_js(20000, 4).passed);
  EXPECT_TRUE(verify::js_bounds(10, 2000, 5).passed);
  EXPECT_TRUE(verify::objective_gradients(6).passed);
  EXPECT_TRUE(verify::loglik_toy(5, 10000, 7).passed);
}

TEST(Verify, ElboChainReportsGeometricWithoutAsserting) {
  const auto r = verify::elbo_chain(10, 2000, 8);
  ASSERT_EQ(r.size(), 2u);
  EXPECT_EQ(r[0].name, "elbo_chain_arithmetic");
  EXPECT_TRUE(r[0].asserted);
  EXPECT_EQ(r[1].name, "elbo_chain_geometric");
  EXPECT_FALSE(r[1].asserted);
}

TEST(Verify, AllPassedIgnoresReportedRows) {
  auto row = [](const char* name, bool passed, bool asserted) {
    verify::PropertyResult r;
    r.name = name;
    r.passed = passed;
    r.asserted = asserted;
    return r;
  };
  std::vector<verify::PropertyResult> r{row("a", true, true), row("b", false, false)};
  EXPECT_TRUE(verify::all_passed(r));
  r.push_back(row("c", false, true));
  EXPECT_FALSE(verify::all_passed(r));
}

TEST(Verify, ParseLevel) {
  EXPECT_EQ(verify::parse_level("quick"), verify::Level::quick);
  EXPECT_EQ(verify::parse_level("full"), verify::Level::full);
  EXPECT_THROW(verify::parse_level("slow"), std::invalid_argument);
}
