#include <gtest/gtest.h>

#include <sstream>

#include "ckl/config.hpp"
#include "ckl/errors.hpp"

namespace ckl {
namespace {

TEST(RunConfig, SetAndGet) {
  RunConfig rc;
  rc.set("d_model", "32");
  rc.set("learning_rate", "0.001");
  rc.set("use_ck_dep", "false");
  rc.set("data", "x.jsonl");
  EXPECT_EQ(rc.model.d_model, 32u);
  EXPECT_DOUBLE_EQ(rc.training.learning_rate, 1e-3);
  EXPECT_FALSE(rc.model.use_ck_dep);
  EXPECT_EQ(rc.get("learning_rate"), "0.001");
  EXPECT_EQ(rc.get("use_ck_dep"), "false");
  EXPECT_EQ(rc.assigned, (std::set<std::string>{"d_model", "learning_rate", "use_ck_dep", "data"}));
}

TEST(RunConfig, RejectsBadInput) {
  RunConfig rc;
  EXPECT_THROW(rc.set("nope", "1"), InputError);
  EXPECT_THROW(rc.set("d_model", "-3"), InputError);
  EXPECT_THROW(rc.set("d_model", "3x"), InputError);
  EXPECT_THROW(rc.set("learning_rate", ""), InputError);
  EXPECT_THROW(rc.set("use_ck_dep", "maybe"), InputError);
  EXPECT_THROW(rc.set("decode", "sample"), InputError);
  EXPECT_THROW(rc.apply_overrides({"d_model"}), InputError);
}

TEST(RunConfig, StreamWithCommentsAndLineNumbers) {
  RunConfig rc;
  std::istringstream in("# comment\n\n d_model = 16 \nepochs=3\n");
  rc.merge_stream(in, "cfg");
  EXPECT_EQ(rc.model.d_model, 16u);
  EXPECT_EQ(rc.training.epochs, 3u);
  std::istringstream bad("epochs=3\nbroken line\n");
  try {
    rc.merge_stream(bad, "cfg");
    FAIL();
  } catch (const InputError& e) {
    EXPECT_NE(std::string(e.what()).find("cfg:2"), std::string::npos) << e.what();
  }
}

TEST(RunConfig, OverridesApplyInOrder) {
  RunConfig rc;
  rc.apply_overrides({"epochs=3", "epochs=5"});
  EXPECT_EQ(rc.training.epochs, 5u);
}

TEST(RunConfig, WriteRoundTrips) {
  RunConfig rc;
  rc.set("d_model", "48");
  rc.set("data_fraction", "0.25");
  rc.set("decode", "beam");
  std::ostringstream out;
  rc.write(out);
  RunConfig back;
  std::istringstream in(out.str());
  back.merge_stream(in, "echo");
  for (const auto& key : RunConfig::keys()) EXPECT_EQ(back.get(key), rc.get(key)) << key;
  EXPECT_EQ(back.assigned.size(), RunConfig::keys().size());
}

TEST(RunConfig, MissingFile) {
  RunConfig rc;
  EXPECT_THROW(rc.merge_file("/nonexistent/ckl.cfg"), InputError);
}

}  // namespace
}  // namespace ckl
