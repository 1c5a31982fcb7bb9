// Copyright 2026 The divattn Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include <gtest/gtest.h>

#include <sstream>

#include "divattn/checks.hpp"
#include "divattn/orthogonality.hpp"

namespace divattn {
namespace {

TEST(ChecksTest, SpectrumHelperIsExact) {
  Rng rng(3);
  const std::vector<double> eig{0.5, 2.0, 7.0};
  const Tensor f = matrix_with_spectrum(eig, 5, rng);
  EXPECT_EQ(f.shape(), (Shape{3, 5}));
  const std::vector<double> got = symmetric_eigenvalues(gram(f));
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(got[i], eig[i], 1e-12);
}

TEST(ChecksTest, ReportFormat) {
  std::ostringstream out;
  write_check_report(out, {{"grad", "relu", 1e-9, 1e-5, true, ""},
                           {"eigen", "lambda", 0.5, 0.01, false, "case 3"}});
  const std::string s = out.str();
  EXPECT_EQ(s.substr(0, s.find('\n')), "suite,check,max_error,tolerance,status,detail");
  EXPECT_NE(s.find("pass"), std::string::npos);
  EXPECT_NE(s.find("fail"), std::string::npos);
}

TEST(ChecksTest, OracleSuitesPass) {
  CheckOptions opt;
  for (const auto& suite : {attention_checks(opt), loss_checks(opt), metric_checks(opt)}) {
    for (const CheckResult& r : suite) EXPECT_TRUE(r.passed) << r.suite << "/" << r.name;
  }
}

}  // namespace
}  // namespace divattn
