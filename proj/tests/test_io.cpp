#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>

#include "gmf/io.hpp"

using namespace gmf;

TEST(ParseMatrix, HeaderAndRowIdsTab) {
  const auto m = io::parse_matrix("gene\ts1\ts2\ng1\t1\t2\ng2\t3.5\t-4\n");
  EXPECT_EQ(m.col_ids, (std::vector<std::string>{"s1", "s2"}));
  EXPECT_EQ(m.row_ids, (std::vector<std::string>{"g1", "g2"}));
  Matrix expected(2, 2);
  expected << 1, 2, 3.5, -4;
  EXPECT_EQ(m.values, expected);
}

TEST(ParseMatrix, BareNumbersCommaAndWhitespace) {
  const auto a = io::parse_matrix("1,2,3\n4,5,6\n");
  const auto b = io::parse_matrix("  1 2   3\r\n4 5 6\n\n");
  EXPECT_EQ(a.values, b.values);
  EXPECT_FALSE(a.has_col_ids());
  EXPECT_FALSE(a.has_row_ids());
  EXPECT_EQ(a.values(1, 2), 6.0);
}

TEST(ParseMatrix, HeaderWithoutCornerLabel) {
  const auto m = io::parse_matrix("s1,s2\ng1,1e3,+2\n");
  EXPECT_EQ(m.col_ids, (std::vector<std::string>{"s1", "s2"}));
  EXPECT_EQ(m.values(0, 0), 1000.0);
  EXPECT_EQ(m.values(0, 1), 2.0);
}

TEST(ParseMatrix, Transpose) {
  const auto m = io::parse_matrix("id\tg1\tg2\tg3\ns1\t1\t2\t3\ns2\t4\t5\t6\n", true);
  EXPECT_EQ(m.rows(), 3);
  EXPECT_EQ(m.cols(), 2);
  EXPECT_EQ(m.row_ids, (std::vector<std::string>{"g1", "g2", "g3"}));
  EXPECT_EQ(m.col_ids, (std::vector<std::string>{"s1", "s2"}));
  EXPECT_EQ(m.values(2, 1), 6.0);
}

TEST(ParseMatrix, ErrorsCarryLineAndColumn) {
  try {
    io::parse_matrix("1\t2\n3\tx\n");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
    EXPECT_EQ(e.column(), 2u);
  }
  try {
    io::parse_matrix("1\t2\n3\n");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
  EXPECT_THROW(io::parse_matrix(""), ParseError);
  EXPECT_THROW(io::parse_matrix("a\tb\n"), ParseError);
  EXPECT_THROW(io::parse_matrix("1\tnan\n"), ValidationError);
  EXPECT_THROW(io::parse_matrix("id\ts\ts\ng\t1\t2\n"), ValidationError);
}

TEST(FormatMatrix, RoundTripExact) {
  Matrix v(2, 3);
  v << 0.1, -1e-300, 3.0, 1.0 / 3.0, 12345.678, -0.0;
  const DataMatrix m(v, {"r1", "r2"}, {"a", "b", "c"});
  const std::string text = io::format_matrix(m);
  const auto back = io::parse_matrix(text);
  EXPECT_EQ(back.values, v);
  EXPECT_EQ(back.row_ids, m.row_ids);
  EXPECT_EQ(back.col_ids, m.col_ids);
  EXPECT_EQ(io::format_matrix(back), text);
}

TEST(ModelFile, RoundTripIsByteIdentical) {
  Matrix x(4, 3);
  x << 1, 2, 3, 2, 4, 6.5, 0, 1, -1, 3, 3, 3;
  TrainConfig cfg;
  cfg.q = 2;
  cfg.m = 20;
  cfg.seed = 17;
  cfg.loss = LossSpec::exp_family(0.25);
  const FactorModel model = train(DataMatrix(x), cfg);
  const std::string text = io::format_model(model);
  const FactorModel back = io::parse_model(text);
  EXPECT_EQ(back.A, model.A);
  EXPECT_EQ(back.B, model.B);
  EXPECT_EQ(back.config.seed, 17u);
  EXPECT_EQ(back.config.loss, cfg.loss);
  EXPECT_EQ(back.final_objective, model.final_objective);
  EXPECT_EQ(io::format_model(back), text);
}

TEST(ModelFile, FileRoundTripAndErrors) {
  const auto path = (std::filesystem::temp_directory_path() / "gmf_test_model.txt").string();
  FactorModel m;
  m.A = Matrix::Constant(2, 1, 0.5);
  m.B = Matrix::Constant(1, 3, -2.0);
  m.config.q = 1;
  io::save_model(path, m);
  EXPECT_EQ(io::format_model(io::load_model(path)), io::format_model(m));
  std::remove(path.c_str());

  EXPECT_THROW(io::parse_model("hello\n"), ParseError);
  EXPECT_THROW(io::parse_model("gmf v1 p=2 n=1 q=1 loss=squared seed=0 objective=0\n1\n"), ParseError);
  EXPECT_THROW(io::parse_model("gmf v1 p=1 n=1 q=1 loss=squared seed=0\n1\n1\n"), ParseError);
  EXPECT_THROW(io::parse_model("gmf v1 p=1 n=1 q=1 loss=squared seed=0 objective=0\nz\n1\n"), ParseError);
  EXPECT_THROW(io::load_model("/nonexistent/dir/model"), IoError);
}

TEST(Trace, CsvHeaderAndRows) {
  const TrainTrace t = {{1, 2.5, 2.5, 0.01, 0.5}, {2, 3.0, 2.5, 0.0075, 1.0}};
  EXPECT_EQ(io::format_trace(t), "iter,objective,best,lambda\n1,2.5,2.5,0.01\n2,3,2.5,0.0075\n");
}

TEST(Labels, ParseAndAlignById) {
  const auto t = io::parse_labels("sample_id,class\ns2,tumor\ns1,normal\ns3,tumor\n");
  EXPECT_EQ(t.classes, (std::vector<std::string>{"tumor", "normal"}));
  DataMatrix x(Matrix::Zero(2, 3), {}, {"s1", "s2", "s3"});
  const auto y = io::align_labels(t, x);
  EXPECT_EQ(y.assignments(), (std::vector<int>{1, 0, 0}));
  EXPECT_EQ(y.g(), 2);
}

TEST(Labels, AlignByOrderWithoutIds) {
  const auto t = io::parse_labels("a 1\nb 2\nc 1\n");
  const auto y = io::align_labels(t, DataMatrix(Matrix::Zero(1, 3)));
  EXPECT_EQ(y.assignments(), (std::vector<int>{0, 1, 0}));
  EXPECT_THROW(io::align_labels(t, DataMatrix(Matrix::Zero(1, 4))), ValidationError);
}

TEST(Labels, MismatchListsOffendingIds) {
  const auto t = io::parse_labels("s1\tA\ns9\tB\n");
  DataMatrix x(Matrix::Zero(1, 2), {}, {"s1", "s2"});
  try {
    io::align_labels(t, x);
    FAIL();
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("s2"), std::string::npos);
    EXPECT_NE(msg.find("s9"), std::string::npos);
  }
  EXPECT_THROW(io::parse_labels("s1,A,extra\n"), ParseError);
  EXPECT_THROW(io::parse_labels("s1,A\ns1,B\n"), ValidationError);
  EXPECT_THROW(io::parse_labels("\n"), ParseError);
}
