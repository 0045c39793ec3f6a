#include "refmort/csv.hpp"
#include "refmort/errors.hpp"

#include <gtest/gtest.h>

#include <sstream>

using namespace refmort;

TEST(Csv, SplitsQuotedFieldsAndTrims) {
    const auto f = csv::split_line(R"( a , "b,c" ,,"d""e")");
    ASSERT_EQ(f.size(), 4u);
    EXPECT_EQ(f[0], "a");
    EXPECT_EQ(f[1], "b,c");
    EXPECT_EQ(f[2], "");
    EXPECT_EQ(f[3], "d\"e");
}

TEST(Csv, SkipsBlankLinesAndKeepsLineNumbers) {
    std::istringstream in("x,y\n\n1,2\r\n3,4\n");
    const auto doc = csv::read(in);
    ASSERT_EQ(doc.rows.size(), 2u);
    EXPECT_EQ(doc.rows[0].line, 3u);
    EXPECT_EQ(doc.rows[1].line, 4u);
    EXPECT_EQ(doc.rows[1].fields[1], "4");
}

TEST(Csv, MissingColumnNamesColumn) {
    std::istringstream in("x,y\n");
    const auto doc = csv::read(in);
    try {
        doc.require_column("z", "file.csv");
        FAIL();
    } catch (const SchemaError &e) {
        EXPECT_NE(std::string(e.what()).find("z"), std::string::npos);
    }
}

TEST(Csv, NumberParsingReportsLine) {
    EXPECT_DOUBLE_EQ(csv::parse_double("2.5", 3, "v"), 2.5);
    EXPECT_EQ(csv::parse_integer("-4", 3, "v"), -4);
    try {
        csv::parse_double("abc", 17, "person_years");
        FAIL();
    } catch (const ValidationError &e) {
        EXPECT_NE(std::string(e.what()).find("17"), std::string::npos);
    }
    EXPECT_THROW(csv::parse_integer("1.5", 2, "cases"), ValidationError);
}

TEST(Csv, FormatDoubleRoundTrips) {
    for (double v : {0.1, 1.0 / 3.0, 1e-300, 123456789.125, -2.0}) {
        EXPECT_EQ(std::stod(csv::format_double(v)), v);
    }
}
