#include <doctest.h>

#include "weedid/core/random.hpp"
#include "weedid/core/taxonomy.hpp"
#include "weedid/error.hpp"

using namespace weedid;

namespace {

TaxonRecord taxon(int id, std::string sci, std::string genus, std::string family, std::int64_t count) {
  return TaxonRecord{id, std::move(sci), "", std::move(genus), std::move(family), count};
}

}  // namespace

TEST_CASE("species with exactly the minimum count are kept") {
  std::vector<TaxonRecord> c{taxon(0, "A a", "A", "F", 99), taxon(1, "B b", "B", "F", 100), taxon(2, "C c", "C", "F", 182)};
  auto set = filter_species(c, 100);
  REQUIRE(set.size() == 2);
  CHECK(set.taxa()[0].image_count == 100);
  CHECK(set.taxa()[1].image_count == 182);
  CHECK(set.taxa()[0].class_id == 0);
  CHECK(set.taxa()[1].class_id == 1);
}

TEST_CASE("the smallest surviving global species passes the 100-image filter") {
  std::vector<TaxonRecord> c{taxon(0, "Caragana halodendron", "Caragana", "Fabaceae", 182)};
  auto set = filter_species(c, 100);
  REQUIRE(set.size() == 1);
  CHECK(set.taxa()[0].scientific_name == "Caragana halodendron");
}

TEST_CASE("filtering an empty list yields an empty set") {
  CHECK(filter_species({}, 100).empty());
}

TEST_CASE("filter_species is idempotent and re-densifies ids (property)") {
  Rng rng = make_rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<TaxonRecord> c;
    const auto n = uniform_index(rng, 30);
    for (std::size_t i = 0; i < n; ++i)
      c.push_back(taxon(static_cast<int>(i), "S" + std::to_string(i), "G", "F", static_cast<std::int64_t>(uniform_index(rng, 300))));
    const auto min = static_cast<std::int64_t>(uniform_index(rng, 300));
    auto once = filter_species(c, min);
    auto twice = filter_species(once.taxa(), min);
    CHECK(once == twice);
    for (std::size_t i = 0; i < once.size(); ++i) CHECK(once.taxa()[i].class_id == static_cast<int>(i));
  }
}

TEST_CASE("taxonomy lookup returns records and rejects unknown ids") {
  ClassSet one("one", {taxon(0, "Avena fatua", "Avena", "Poaceae", 5001)});
  CHECK(taxonomy_lookup(one, 0).scientific_name == "Avena fatua");
  try {
    taxonomy_lookup(one, 1);
    FAIL("expected UnknownClass");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::UnknownClass);
  }
}

TEST_CASE("oat species share a genus") {
  ClassSet oats("oats", {taxon(0, "Avena fatua", "Avena", "Poaceae", 5001), taxon(1, "Avena sterilis", "Avena", "Poaceae", 297)});
  CHECK(taxonomy_lookup(oats, 0).genus == taxonomy_lookup(oats, 1).genus);
}

TEST_CASE("class sets enforce their invariants") {
  CHECK_THROWS_AS(ClassSet("x", {taxon(1, "A", "G", "F", 1)}), Error);
  CHECK_THROWS_AS(ClassSet("x", {taxon(0, "A", "G", "F", 1), taxon(1, "A", "G", "F", 1)}), Error);
  CHECK_THROWS_AS(ClassSet("x", {taxon(0, "A", "", "F", 1)}), Error);
}

TEST_CASE("class set CSV round-trips, including quoted fields") {
  ClassSet set("iowa", {TaxonRecord{0, "Amaranthus palmeri", "Palmer amaranth, pigweed", "Amaranthus", "Amaranthaceae", 1995},
                        TaxonRecord{1, "Setaria \"faberi\"", "giant foxtail", "Setaria", "Poaceae", 12}});
  const auto csv = class_set_to_csv(set);
  CHECK(csv.rfind("class_id,scientific_name,common_name,genus,family,image_count\n", 0) == 0);
  CHECK(class_set_from_csv(csv, "iowa") == set);
  CHECK_THROWS_AS(class_set_from_csv("a,b\n1,2\n", "bad"), Error);
}

TEST_CASE("subsets are matched by scientific name") {
  ClassSet global("g", {taxon(0, "A a", "A", "F", 1), taxon(1, "B b", "B", "F", 1), taxon(2, "C c", "C", "F", 1)});
  std::vector<std::string> names{"C c", "A a"};
  auto sub = make_subset(global, names, "local");
  CHECK(sub.taxa()[0].scientific_name == "C c");
  CHECK(sub.taxa()[1].class_id == 1);
  std::vector<std::string> bad{"Z z"};
  CHECK_THROWS_AS(make_subset(global, bad, "local"), Error);
}
