#include <gtest/gtest.h>

#include "asfv/common.hpp"

using namespace asfv;

TEST(Units, DbmRoundTrip) {
  EXPECT_DOUBLE_EQ(dbm_to_watts(30.0), 1.0);
  EXPECT_DOUBLE_EQ(dbm_to_watts(20.0), 0.1);
  EXPECT_NEAR(dbm_to_watts(-100.0), 1e-13, 1e-27);
  for (double d : {-50.0, 0.0, 25.0, 40.0}) EXPECT_NEAR(watts_to_dbm(dbm_to_watts(d)), d, 1e-12);
}

TEST(Seeds, Fnv1aKnownVector) {
  // Published 64-bit FNV-1a test vectors.
  EXPECT_EQ(fnv1a(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a("a"), 0xaf63dc4c8601ec8cULL);
}

TEST(Seeds, Splitmix64KnownVector) {
  // First output of the reference generator seeded with 0.
  EXPECT_EQ(splitmix64(0), 0xe220a8397b1dcdafULL);
}

TEST(Seeds, StreamsDependOnLabelRoundAndVehicle) {
  EXPECT_EQ(derive_seed(1, "mobility", 3), derive_seed(1, "mobility", 3));
  EXPECT_NE(derive_seed(1, "mobility", 3), derive_seed(1, "mobility", 4));
  EXPECT_NE(derive_seed(1, "mobility", 3), derive_seed(1, "partition", 3));
  EXPECT_NE(derive_seed(1, "mobility", 3), derive_seed(2, "mobility", 3));
  EXPECT_NE(derive_seed(1, "x", 2, 0), derive_seed(1, "x", 2, 1));
  EXPECT_EQ(derive_seed(1, "x", 2, 5), derive_seed(1, "x", 2, 5));
}

TEST(Seeds, MakeRngIsReproducible) {
  Rng a = make_rng(9, "label", 1), b = make_rng(9, "label", 1);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a(), b());
}

TEST(Errors, Hierarchy) {
  EXPECT_THROW(throw ParseError("x"), Error);
  EXPECT_THROW(throw InvariantError("x"), Error);
  EXPECT_THROW(throw DomainError("x"), Error);
  EXPECT_THROW(throw InfeasibleError("x"), Error);
}
