#include <random>

#include "doctest.h"
#include "mmh/error.hpp"
#include "mmh/metadata.hpp"
#include "mmh/text.hpp"
#include "support.hpp"

using namespace mmh;
using namespace mmh::testing;

namespace {

const std::string kHeader = std::string(kMetadataHeader) + "\n";

fs::path write(const TempDir& d, const std::string& name, const std::string& body) {
  text::write_file(d / name, body);
  return d / name;
}

}  // namespace

TEST_SUITE("metadata") {
  TEST_CASE("pose row parses into its fields") {
    TempDir d;
    const auto p = write(d, "train.tsv",
                         kHeader + "/path/to/pose2.pose\t404\t514\t<slt> asl en\t\t"
                                   "Moving the stick adjusts the wing’s angle of attack.\n");
    const auto t = parse_metadata_tsv(p);
    REQUIRE(t.records.size() == 1);
    CHECK(t.split == Split::Train);
    CHECK(t.records[0] == SampleRecord{"/path/to/pose2.pose", 404, 514, "<slt> asl en", "",
                                       "Moving the stick adjusts the wing’s angle of attack."});
  }

  TEST_CASE("text-only row is valid under text2text") {
    TempDir d;
    const auto p = write(d, "train.tsv",
                         kHeader + "\t\t\t<mt> es en El gato se sienta en la estera.\t\tThe cat sits on the mat.\n");
    const auto t = parse_metadata_tsv(p);
    REQUIRE(t.records.size() == 1);
    CHECK(t.records[0].signal.empty());
    CHECK(t.records[0].signal_start == 0);
    CHECK(validate_records(t, Modality::Text2Text).empty());
  }

  TEST_CASE("header-only file is EmptyFile") {
    TempDir d;
    const auto p = write(d, "train.tsv", kHeader);
    CHECK_THROWS_WITH_AS(parse_metadata_tsv(p), doctest::Contains("EmptyFile"), Error);
  }

  TEST_CASE("wrong header order is MissingColumn") {
    TempDir d;
    const auto p = write(d, "train.tsv", "signal_start\tsignal\tsignal_end\tencoder_prompt\tdecoder_prompt\toutput\n");
    try {
      parse_metadata_tsv(p);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::MissingColumn);
    }
  }

  TEST_CASE("bad integers are rejected") {
    TempDir d;
    const auto p = write(d, "train.tsv", kHeader + "a.pose\tsoon\t10\t\t\tx\n");
    try {
      parse_metadata_tsv(p);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::BadInteger);
    }
  }

  TEST_CASE("validation reports every breach with its row") {
    TempDir d;
    text::write_file(d / "ok.mmhpose", "");
    const auto p = write(d, "train.tsv",
                         kHeader + "ok.mmhpose\t514\t404\tp\t\tout\n" + "missing.mmhpose\t0\t0\tp\t\tout\n" +
                             "\t0\t0\t\t\tout\n" + "ok.mmhpose\t0\t0\tp\t\t\n");
    const auto v = validate_records(parse_metadata_tsv(p), Modality::Pose2Text);
    std::vector<size_t> rows;
    for (const auto& x : v) rows.push_back(x.row);
    CHECK(std::count(rows.begin(), rows.end(), 0) >= 1);
    CHECK(std::count(rows.begin(), rows.end(), 1) >= 1);
    CHECK(std::count(rows.begin(), rows.end(), 2) >= 1);
    CHECK(std::count(rows.begin(), rows.end(), 3) >= 1);
    bool end_before_start = false, missing = false;
    for (const auto& x : v) {
      end_before_start |= x.row == 0 && x.message.find("end before start") != std::string::npos;
      missing |= x.row == 1 && x.message.find("missing signal file") != std::string::npos;
    }
    CHECK(end_before_start);
    CHECK(missing);
  }

  TEST_CASE("empty output is allowed only in the test split") {
    TempDir d;
    const auto p = write(d, "test.tsv", kHeader + "\t\t\tprompt\t\t\n");
    CHECK(parse_metadata_tsv(p).split == Split::Test);
    CHECK(validate_records(parse_metadata_tsv(p), Modality::Text2Text).empty());
    CHECK_FALSE(validate_records(parse_metadata_tsv(p, Split::Train), Modality::Text2Text).empty());
  }

  TEST_CASE("pose modality requires a registered pose extension") {
    TempDir d;
    text::write_file(d / "a.mmhfeat", "");
    const auto p = write(d, "train.tsv", kHeader + "a.mmhfeat\t0\t0\t\t\tout\n");
    CHECK_FALSE(validate_records(parse_metadata_tsv(p), Modality::Pose2Text).empty());
    CHECK(validate_records(parse_metadata_tsv(p), Modality::Features2Text).empty());
  }

  TEST_CASE("concat keeps order and rejects mixed splits") {
    SplitTable slt{Split::Train, {}, "slt.tsv"}, mt{Split::Train, {}, "mt.tsv"}, test{Split::Test, {}, "t.tsv"};
    for (int i = 0; i < 3; ++i) {
      slt.records.push_back({"p" + std::to_string(i) + ".pose", 0, 0, "<slt>", "", "s" + std::to_string(i)});
      mt.records.push_back({"", 0, 0, "<mt> x", "", "m" + std::to_string(i)});
    }
    const auto all = concat_multitask({slt, mt});
    REQUIRE(all.records.size() == 6);
    CHECK(all.records[0] == slt.records[0]);
    CHECK(all.records[3] == mt.records[0]);
    CHECK(concat_multitask({slt}).records == slt.records);
    try {
      concat_multitask({slt, test});
      FAIL("expected MixedSplits");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::MixedSplits);
    }
  }

  TEST_CASE("newlines are sanitized with a warning") {
    TempDir d;
    SplitTable t{Split::Train, {{"", 0, 0, "p", "", "line one\nline two"}}, ""};
    const auto warnings = write_metadata_tsv(t, d / "o.tsv");
    CHECK(warnings.size() == 1);
    CHECK(parse_metadata_tsv(d / "o.tsv").records[0].output == "line one line two");
  }

  TEST_CASE("tabs in a field are MalformedRow") {
    TempDir d;
    SplitTable t{Split::Train, {{"", 0, 0, "p", "", "a\tb"}}, ""};
    try {
      write_metadata_tsv(t, d / "o.tsv");
      FAIL("expected MalformedRow");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::MalformedRow);
    }
  }

  TEST_CASE("empty table writes a header-only file") {
    TempDir d;
    write_metadata_tsv(SplitTable{}, d / "o.tsv");
    CHECK(text::read_file(d / "o.tsv") == kHeader);
  }

  TEST_CASE("fuzzed tables round-trip except for sanitized newlines") {
    TempDir d;
    std::mt19937_64 rng(31);
    const std::string alphabet = "abc xyz<>#,.!?\xc3\xa9\xe2\x80\x99\n";
    auto field = [&] {
      std::string s;
      const size_t n = rng() % 12;
      for (size_t i = 0; i < n; ++i) {
        const size_t k = rng() % 16;
        if (k < 13) {
          s.push_back(alphabet[k]);
        } else if (k == 13) {
          s += "\xc3\xa9";
        } else if (k == 14) {
          s += "\xe2\x80\x99";
        } else {
          s.push_back('\n');
        }
      }
      return s;
    };
    for (int trial = 0; trial < 50; ++trial) {
      SplitTable t;
      const size_t rows = 1 + rng() % 6;
      for (size_t i = 0; i < rows; ++i) {
        const int64_t start = static_cast<int64_t>(rng() % 3 ? 0 : rng() % 1000);
        const int64_t end = start == 0 && rng() % 2 ? 0 : start + 1 + static_cast<int64_t>(rng() % 1000);
        t.records.push_back({field(), start, end, field(), field(), field()});
      }
      const auto warnings = write_metadata_tsv(t, d / "fuzz.tsv");
      const auto back = parse_metadata_tsv(d / "fuzz.tsv");
      REQUIRE(back.records.size() == t.records.size());
      size_t newline_fields = 0;
      for (size_t i = 0; i < rows; ++i) {
        auto expect = t.records[i];
        for (auto* s : {&expect.signal, &expect.encoder_prompt, &expect.decoder_prompt, &expect.output}) {
          if (s->find('\n') != std::string::npos) ++newline_fields;
          std::replace(s->begin(), s->end(), '\n', ' ');
        }
        CHECK(back.records[i] == expect);
      }
      CHECK(warnings.size() == newline_fields);
    }
  }

  TEST_CASE("split inference from file names") {
    CHECK(infer_split("data/train.tsv") == Split::Train);
    CHECK(infer_split("data/validation.tsv") == Split::Validation);
    CHECK(infer_split("data/dev.tsv") == Split::Validation);
    CHECK(infer_split("data/test.tsv") == Split::Test);
  }

  TEST_CASE("relative signal paths resolve against the table directory") {
    SplitTable t{Split::Train, {}, "/data/sets/train.tsv"};
    CHECK(resolve_signal_path(t, "poses/a.pose") == fs::path("/data/sets/poses/a.pose"));
    CHECK(resolve_signal_path(t, "/abs/a.pose") == fs::path("/abs/a.pose"));
  }
}
