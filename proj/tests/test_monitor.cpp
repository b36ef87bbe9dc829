#include "colsbm/vem.hpp"

#include <gtest/gtest.h>

namespace colsbm {
namespace {

// Every test process checks that no VEM iteration it ran lowered the ELBO.
class ElboDropCheck : public ::testing::Environment {
 public:
  void TearDown() override { EXPECT_LE(max_elbo_drop().load(), 1e-8) << "VEM iterations: " << vem_iteration_count(); }
};

[[maybe_unused]] const auto* const kElboDropCheck = ::testing::AddGlobalTestEnvironment(new ElboDropCheck);

}  // namespace
}  // namespace colsbm
