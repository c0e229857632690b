#include "subdiff/verify.hpp"

#include <gtest/gtest.h>

#include <set>
#include <sstream>

namespace subdiff {
namespace {

const std::vector<CheckResult>& clean_run() {
    static const std::vector<CheckResult> r = run_verify();
    return r;
}

TEST(Verify, AllChecksPass) {
    const auto& r = clean_run();
    for (const CheckResult& c : r) EXPECT_TRUE(c.pass) << c.group << "/" << c.name << " value " << c.value;
    EXPECT_TRUE(all_passed(r));
}

TEST(Verify, CoversAtLeastFiveGroups) {
    std::set<std::string> groups;
    for (const CheckResult& c : clean_run()) groups.insert(c.group);
    EXPECT_GE(groups.size(), 5u);
    for (const char* g : {"stehfest", "nilt", "caputo-laplace", "derivatives", "residual", "l1-scheme"})
        EXPECT_TRUE(groups.count(g)) << g;
}

TEST(Verify, DetectsCorruptedCoefficient) {
    VerifyOptions opt;
    opt.corrupt = StehfestCorruption{14, 1, 1e-6};
    const auto r = run_verify(opt);
    EXPECT_FALSE(all_passed(r));
    bool caught = false;
    for (const CheckResult& c : r)
        if (c.name == "sum_mu_over_i_M14") caught = !c.pass;
    EXPECT_TRUE(caught);
}

TEST(Verify, ReportCountsFailures) {
    std::vector<CheckResult> r{{"g", "a", true, 0.0, 1.0}, {"g", "b", false, 2.0, 1.0}};
    std::ostringstream os;
    print_report(os, r);
    EXPECT_NE(os.str().find("1/2 checks passed"), std::string::npos);
    EXPECT_NE(os.str().find("b"), std::string::npos);
}

}  // namespace
}  // namespace subdiff
