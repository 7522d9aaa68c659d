#include "slicebench/registry.hpp"

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <functional>

#include "doctest.h"
#include "slicebench/sha256.hpp"

using namespace slicebench;
using nlohmann::json;

namespace {

Errc code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return Errc::io_error;
}

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    path = std::filesystem::temp_directory_path() /
           ("slicebench_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter()++));
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  static int& counter() {
    static int c = 0;
    return c;
  }
};

const std::vector<std::pair<std::string, std::string>> kPlainSchema = {{"id", "string"},
                                                                       {"value", "int"}};

std::string plain_csv(int rows, int offset = 0) {
  std::string out = "id,value\n";
  for (int i = 0; i < rows; ++i)
    out += "row" + std::to_string(i + offset) + "," + std::to_string(i) + "\n";
  return out;
}

// Counts every fetch that reaches it; stands in for the network.
class CountingFetcher : public Fetcher {
 public:
  explicit CountingFetcher(std::string value) : value_(std::move(value)) {}
  std::string fetch(const std::string& key) override {
    ++calls;
    return value_ + ":" + key;
  }
  size_t calls = 0;

 private:
  std::string value_;
};

}  // namespace

TEST_CASE("sha256 known vectors") {
  CHECK(Sha256::hex("") ==
        "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(Sha256::hex("abc") ==
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("registration assigns versions and content hashes") {
  TempDir dir;
  Registry reg(dir.path, [] { return std::string("2026-01-01T00:00:00Z"); });
  auto m1 = reg.register_dataset("toy", plain_csv(3), kPlainSchema);
  CHECK(m1.version == 1);
  CHECK(m1.content_hash == Sha256::hex(plain_csv(3)));
  auto m2 = reg.register_dataset("toy", plain_csv(3), kPlainSchema);
  CHECK(m2.version == 2);
  CHECK(m2.content_hash == m1.content_hash);
  CHECK(reg.latest_version("toy") == 2);
  CHECK(reg.read_blob(m1) == plain_csv(3));

  CHECK(code_of([&] {
          reg.register_dataset("child", plain_csv(1), kPlainSchema, {{"toy", 3}});
        }) == Errc::unknown_parent);
  CHECK(code_of([&] { reg.manifest("nope", 1); }) == Errc::unknown_dataset);
}

TEST_CASE("schema validation") {
  TempDir dir;
  Registry reg(dir.path);
  CHECK(code_of([&] {
          reg.register_dataset("bad", "id,wrong\na,1\n", kPlainSchema);
        }) == Errc::schema_mismatch);
  CHECK(code_of([&] {
          reg.register_dataset("bad", "id,value\na,notanint\n", kPlainSchema);
        }) == Errc::schema_mismatch);
  CHECK(code_of([&] {
          reg.register_dataset("bad", plain_csv(1), {{"id", "bogus_type"}});
        }) == Errc::schema_mismatch);
}

TEST_CASE("lineage chains and tamper detection") {
  TempDir dir;
  Registry reg(dir.path);
  auto root = reg.register_dataset("root", plain_csv(2), kPlainSchema);
  auto child =
      reg.register_dataset("derived", plain_csv(2, 10), kPlainSchema, {{"root", root.version}});
  auto chain = reg.lineage("derived", child.version);
  REQUIRE(chain.size() == 2);
  CHECK(chain[0].name == "root");
  CHECK(chain[1].name == "derived");
  CHECK(reg.lineage("root", 1).size() == 1);

  // tamper with the stored blob
  std::ofstream(dir.path / "blobs" / child.content_hash) << "tampered";
  CHECK(code_of([&] { reg.read_blob(child); }) == Errc::corrupt_file);
}

TEST_CASE("data view config document round-trip") {
  DataViewConfig cfg;
  cfg.dataset_name = "brown_demo";
  cfg.steps.push_back({"autofill_identifier",
                       json{{"autofill_column", "Name"}, {"key_column", "Sequence"}}});
  cfg.steps.push_back({"create_range", json{{"column", "KD (nM)"},
                                            {"keys", json::array({"Putative binder"})},
                                            {"subs", json::array({0})}}});
  cfg.steps.push_back({"insert_protein_sequence", json{{"gene_column", "Protein Target"}}});
  cfg.var_map = {{"ID1", "Name"}, {"X1", "Sequence"}};

  json doc = cfg.to_document();
  CHECK(doc.contains("functions_to_run"));
  CHECK(doc.contains("args_for_functions"));
  CHECK(doc.contains("var_map"));
  DataViewConfig back = DataViewConfig::from_document(doc);
  CHECK(back == cfg);

  json bad = doc;
  bad["functions_to_run"].push_back("verboten");
  bad["args_for_functions"].push_back(json::object());
  CHECK(code_of([&] { DataViewConfig::from_document(bad); }) == Errc::unknown_transform);
}

TEST_CASE("view transforms: autofill, create_range, rename semantics") {
  Table t;
  t.columns = {"X1", "ID1", "KD (nM)"};
  t.rows = {{"SEQA", "alpha", "12.5"},
            {"SEQA", "", "Putative binder"},
            {"SEQB", "beta", "Putative binder"},
            {"SEQC", "", "3"}};

  DataViewConfig cfg;
  cfg.dataset_name = "t";
  cfg.steps.push_back({"autofill_identifier",
                       json{{"autofill_column", "ID1"}, {"key_column", "X1"}}});
  cfg.steps.push_back({"create_range", json{{"column", "KD (nM)"},
                                            {"keys", json::array({"Putative binder"})},
                                            {"subs", json::array({0})}}});
  cfg.var_map = {{"ID1", "Name"}, {"X1", "Sequence"}};

  Table out = apply_view_steps(cfg, t, nullptr);
  CHECK(out.columns == std::vector<std::string>{"Sequence", "Name", "KD (nM)"});
  CHECK(out.rows[1][1] == "alpha");  // filled from the row sharing SEQA
  CHECK(out.rows[3][1] == "");       // no donor row for SEQC
  CHECK(out.rows[1][2] == "0");
  CHECK(out.rows[2][2] == "0");
  CHECK(out.rows[0][2] == "12.5");

  DataViewConfig missing;
  missing.dataset_name = "t";
  missing.var_map = {{"nope", "x"}};
  CHECK(code_of([&] { apply_view_steps(missing, t, nullptr); }) == Errc::column_missing);
}

TEST_CASE("insert_sequence fetches one sequence per distinct key") {
  Table t;
  t.columns = {"Protein Target"};
  t.rows = {{"MDM2"}, {"ACE2"}, {"MDM2"}, {"12ca5"}};

  DataViewConfig cfg;
  cfg.dataset_name = "t";
  cfg.steps.push_back({"insert_sequence", json{{"gene_column", "Protein Target"}}});

  auto counting = std::make_unique<CountingFetcher>("SEQ");
  CountingFetcher* raw = counting.get();
  CachingFetcher cache(std::move(counting));
  Table out = apply_view_steps(cfg, t, &cache);
  CHECK(out.columns.back() == "protein_or_rna_sequence");
  CHECK(out.rows[0][1] == "SEQ:MDM2");
  CHECK(out.rows[2][1] == "SEQ:MDM2");
  CHECK(raw->calls == 3);  // distinct keys only

  FixtureFetcher fixture(std::unordered_map<std::string, std::string>{{"MDM2", "MCNTN"}});
  CHECK(fixture.fetch("MDM2") == "MCNTN");
  CHECK(code_of([&] { fixture.fetch("ACE2"); }) == Errc::fixture_missing);
}

TEST_CASE("fixture-mode views perform zero network operations") {
  TempDir dir;
  Registry reg(dir.path);
  std::string csv = "Protein Target,KD (nM)\nMDM2,Putative binder\nACE2,5\n";
  reg.register_dataset("brown_demo", csv,
                       {{"Protein Target", "string"}, {"KD (nM)", "string"}});

  // fixture file on disk, exercised through make_fetcher
  std::string fixture_path = (dir.path / "seqs.json").string();
  std::ofstream(fixture_path) << R"({"MDM2": "MCNTNMSVPTDGAVT", "ACE2": "MSSSSWLLL"})";
  FetcherSpec spec;
  spec.kind = FetcherSpec::Kind::fixture_file;
  spec.fixture_path = fixture_path;
  auto fetcher = make_fetcher(spec);

  DataViewConfig cfg;
  cfg.dataset_name = "brown_demo";
  cfg.steps.push_back({"create_range", json{{"column", "KD (nM)"},
                                            {"keys", json::array({"Putative binder"})},
                                            {"subs", json::array({0})}}});
  cfg.steps.push_back({"insert_protein_sequence", json{{"gene_column", "Protein Target"}}});
  cfg.var_map = {{"Protein Target", "ID2"}};

  RestFetcher::reset_network_operations();
  auto [table, manifest] = reg.apply_view(cfg, fetcher.get());
  CHECK(RestFetcher::network_operations() == 0);
  CHECK(table.columns == std::vector<std::string>{"ID2", "KD (nM)", "protein_or_rna_sequence"});
  CHECK(table.rows[0][2] == "MCNTNMSVPTDGAVT");
  CHECK(manifest.name == "brown_demo_view");
  CHECK(manifest.parent.has_value());
  CHECK(manifest.parent->first == "brown_demo");
  CHECK(manifest.view_config.has_value());
  CHECK(reg.lineage("brown_demo_view", manifest.version).size() == 2);

  // purity: applying the same view again yields the same content hash
  auto [table2, manifest2] = reg.apply_view(cfg, fetcher.get());
  CHECK(manifest2.content_hash == manifest.content_hash);
  CHECK(table2 == table);
}

TEST_CASE("row filters: operators, conjunction, errors") {
  std::vector<std::string> cols = {"tissue", "sex", "count"};
  RowFilter f = RowFilter::compile("tissue == 'brain' and sex == 'male'", cols);
  CHECK(f.matches({"brain", "male", "5"}));
  CHECK_FALSE(f.matches({"brain", "female", "5"}));
  CHECK_FALSE(f.matches({"liver", "male", "5"}));

  RowFilter num = RowFilter::compile("count >= 10", cols);
  CHECK(num.matches({"x", "y", "10"}));
  CHECK(num.matches({"x", "y", "200"}));   // numeric, not lexicographic
  CHECK_FALSE(num.matches({"x", "y", "9"}));

  RowFilter inlist = RowFilter::compile("tissue in ('brain', 'liver')", cols);
  CHECK(inlist.matches({"liver", "m", "1"}));
  CHECK_FALSE(inlist.matches({"lung", "m", "1"}));

  RowFilter neq = RowFilter::compile("sex != 'male'", cols);
  CHECK(neq.matches({"b", "female", "0"}));

  CHECK(code_of([&] { RowFilter::compile("ghost == 'x'", cols); }) == Errc::bad_filter);
  try {
    RowFilter::compile("ghost == 'x'", cols);
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("ghost") != std::string::npos);
  }
  CHECK(code_of([&] { RowFilter::compile("tissue ==", cols); }) == Errc::bad_filter);
  CHECK(code_of([&] { RowFilter::compile("tissue = 'x'", cols); }) == Errc::bad_filter);
}

TEST_CASE("streaming yields exact chunks and bounded memory") {
  TempDir dir;
  Registry reg(dir.path);
  reg.register_dataset("rows", plain_csv(250), kPlainSchema);

  DatasetStream stream = reg.stream("rows", 1, "", 100);
  Table batch;
  std::vector<size_t> sizes;
  std::vector<std::vector<std::string>> all_rows;
  while (stream.next(batch)) {
    sizes.push_back(batch.rows.size());
    for (auto& r : batch.rows) all_rows.push_back(r);
  }
  CHECK(sizes == std::vector<size_t>{100, 100, 50});
  CHECK(stream.peak_resident_rows() <= 100);

  Table eager = Table::from_csv(plain_csv(250));
  CHECK(all_rows == eager.rows);

  // chunk 1 and a filter
  DatasetStream filtered = reg.stream("rows", 1, "value < 3", 1);
  size_t n = 0;
  while (filtered.next(batch)) n += batch.rows.size();
  CHECK(n == 3);
  CHECK(filtered.peak_resident_rows() <= 1);

  CHECK(code_of([&] { reg.stream("rows", 1, "ghost == 1", 10); }) == Errc::bad_filter);
  CHECK(code_of([&] { reg.stream("rows", 1, "", 0); }) == Errc::invalid_argument);
}

TEST_CASE("stream concatenation equals the eager filtered read byte for byte") {
  TempDir dir;
  Registry reg(dir.path);
  std::string csv = "id,value\n";
  for (int i = 0; i < 57; ++i)
    csv += "r" + std::to_string(i) + "," + std::to_string(i % 7) + "\n";
  reg.register_dataset("mix", csv, kPlainSchema);

  std::string filter = "value >= 3";
  for (size_t chunk : {1, 5, 1000}) {
    DatasetStream stream = reg.stream("mix", 1, filter, chunk);
    Table combined;
    combined.columns = stream.columns();
    Table batch;
    while (stream.next(batch))
      combined.rows.insert(combined.rows.end(), batch.rows.begin(), batch.rows.end());

    Table eager = Table::from_csv(csv);
    RowFilter f = RowFilter::compile(filter, eager.columns);
    Table expected;
    expected.columns = eager.columns;
    for (auto& r : eager.rows)
      if (f.matches(r)) expected.rows.push_back(r);
    CHECK(combined.to_csv() == expected.to_csv());
  }
}
