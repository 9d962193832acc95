#include <gtest/gtest.h>

#include <chrono>
#include <regex>

#include "cartoprompt/osm/xml.hpp"
#include "cartoprompt/verbalize.hpp"
#include "support/oracles.hpp"

using namespace cartoprompt;

namespace {

// Reference texts, transcribed with their original double spaces.
const std::string kGoldenText =
    "This is a circular area of radius of 300 meters that intersects province(s) of İstanbul and district(s) of "
    "Fatih. There are 3 atm(s), 2 bank(s), 1 bureau_de_change(s), 18 cafe(s), 2 clinic(s), 1 court_house(s), 2 "
    "dentist(s), 1 driving_school(s), 2 events_venue(s), 11 fast_food(s), 1 guest_house(s), 3 hospital(s), 11 "
    "parking(s), 33 pharmacy(s), 9 place_of_worship(s), 1 post_office(s), 43 restaurant(s), 5 school(s), 1 "
    "shower(s). There are 525 buildings which cover 31% of the total area.  It contains 289 meters of platform "
    "rail, 100 meters of footway road, 80 meters of pedestrian road, 44 meters of primary_link road, 2786 meters of "
    "residential road, 283 meters of service road, 20 meters of steps road, 1005 meters of tertiary road, 62 meters "
    "of tertiary_link road, 249 meters of unclassified road.";

const std::string kParkText =
    "This is a circular area of radius of 300 meters that intersects province(s) of İstanbul and district(s) of "
    "Fatih. There are 18 atm(s), 2 bank(s), 2 bench(s), 4 bicycle_parking(s), 6 bureau_de_change(s), 31 cafe(s), 1 "
    "clinic(s), 3 doctors(s), 8 fast_food(s), 1 fire_station(s), 8 fountain(s), 1 gallery(s), 2 ice_cream(s), 25 "
    "library(s), 1 motorcycle_parking(s), 9 parking(s), 5 pharmacy(s), 10 place_of_worship(s), 1 police(s), 5 "
    "post_office(s), 3 pub(s), 4 public_bath(s), 2 public_building(s), 135 restaurant(s), 3 school(s), 1 "
    "social_centre(s), 2 social_facility(s), 2 telephone(s), 1 theatre(s), 6 toilets(s), 1 university(s), 5 "
    "vending_machine(s), 3 waste_basket(s), 1 waste_disposal(s). There are 293 buildings which cover 25% of the "
    "total area.  The area is covered by 5% park. It contains 242 meters of platform rail, 10 meters of tram rail, "
    "58 meters of construction road, 2942 meters of footway road, 1786 meters of pedestrian road, 2060 meters of "
    "residential road, 126 meters of service road, 51 meters of steps road, 618 meters of tertiary road.";

AreaDescriptor park_descriptor() {
  AreaDescriptor d;
  d.radius_m = 300;
  d.provinces = {"İstanbul"};
  d.districts = {"Fatih"};
  d.amenity_counts = {{"atm", 18},         {"bank", 2},          {"bench", 2},           {"bicycle_parking", 4},
                      {"bureau_de_change", 6}, {"cafe", 31},     {"clinic", 1},          {"doctors", 3},
                      {"fast_food", 8},    {"fire_station", 1},  {"fountain", 8},        {"gallery", 1},
                      {"ice_cream", 2},    {"library", 25},      {"motorcycle_parking", 1}, {"parking", 9},
                      {"pharmacy", 5},     {"place_of_worship", 10}, {"police", 1},      {"post_office", 5},
                      {"pub", 3},          {"public_bath", 4},   {"public_building", 2}, {"restaurant", 135},
                      {"school", 3},       {"social_centre", 1}, {"social_facility", 2}, {"telephone", 2},
                      {"theatre", 1},      {"toilets", 6},       {"university", 1},      {"vending_machine", 5},
                      {"waste_basket", 3}, {"waste_disposal", 1}};
  d.building_count = 293;
  d.building_coverage_pct = 25;
  d.coverage_entries = {{"leisure", "park", 5}};
  d.rail_lengths_m = {{"platform", 242}, {"tram", 10}};
  d.road_lengths_m = {{"construction", 58}, {"footway", 2942}, {"pedestrian", 1786}, {"residential", 2060},
                      {"service", 126},     {"steps", 51},      {"tertiary", 618}};
  return d;
}

}  // namespace

TEST(RenderPreprompt, GoldenFixtureMatchesReference) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto fs = osm::assemble_features(osm::parse_osm_xml(oracle::read_file(oracle::fixture("fatih_golden.osm"))));
  const std::string text = render_preprompt(build_descriptor(fs, geo::LatLon{41.0115, 28.9560}));
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  EXPECT_EQ(normalize_spaces(text), normalize_spaces(kGoldenText));
  EXPECT_EQ(text, normalize_spaces(text));
  EXPECT_LT(secs, 5.0);
}

TEST(RenderPreprompt, MinimalKadikoy) {
  AreaDescriptor d;
  d.radius_m = 300;
  d.provinces = {"İstanbul"};
  d.districts = {"Kadıköy"};
  d.amenity_counts = {{"cafe", 1}};
  EXPECT_EQ(render_preprompt(d),
            "This is a circular area of radius of 300 meters that intersects province(s) of İstanbul and district(s) "
            "of Kadıköy. There are 1 cafe(s).");
}

TEST(RenderPreprompt, ParkCoverageSentenceSitsBetweenBuildingsAndLengths) {
  const std::string text = render_preprompt(park_descriptor());
  EXPECT_EQ(text, normalize_spaces(kParkText));
  const auto b = text.find("of the total area.");
  const auto c = text.find("The area is covered by 5% park.");
  const auto l = text.find("It contains");
  EXPECT_LT(b, c);
  EXPECT_LT(c, l);
}

TEST(RenderPreprompt, TwoDistrictsAndMultipleCoverage) {
  AreaDescriptor d;
  d.radius_m = 300;
  d.provinces = {"İstanbul"};
  d.districts = {"Ataşehir", "Kadıköy"};
  d.building_count = 140;
  d.building_coverage_pct = 18;
  d.coverage_entries = {{"landuse", "grass", 3}, {"leisure", "park", 3}, {"landuse", "construction", 7}};
  d.road_lengths_m = {{"service", 532}};
  EXPECT_EQ(render_preprompt(d),
            "This is a circular area of radius of 300 meters that intersects province(s) of İstanbul and district(s) "
            "of Ataşehir, Kadıköy. There are 140 buildings which cover 18% of the total area. The area is covered by "
            "7% construction, 3% grass, 3% park. It contains 532 meters of service road.");
}

TEST(RenderPreprompt, EmptyDescriptorRendersFirstSentenceOnly) {
  AreaDescriptor d;
  d.radius_m = 250.5;
  EXPECT_EQ(render_preprompt(d),
            "This is a circular area of radius of 250.5 meters that intersects province(s) of  and district(s) of .");
}

TEST(RenderPreprompt, RailsPrecedeRoads) {
  AreaDescriptor d;
  d.radius_m = 300;
  d.rail_lengths_m = {{"tram", 60}, {"platform", 603}};
  d.road_lengths_m = {{"footway", 1351}, {"construction", 5}};
  const std::string text = render_preprompt(d);
  EXPECT_NE(text.find("It contains 603 meters of platform rail, 60 meters of tram rail, 5 meters of construction road, "
                      "1351 meters of footway road."),
            std::string::npos);
}

TEST(RenderPreprompt, AmenityRegexRoundTrip) {
  const AreaDescriptor d = park_descriptor();
  const std::string text = render_preprompt(d);
  const auto start = text.find("There are ");
  const auto end = text.find('.', start);
  const std::string sentence = text.substr(start, end - start);
  const std::regex re(R"((\d+) ([a-z_]+)\(s\))");
  std::map<std::string, long> parsed;
  for (auto it = std::sregex_iterator(sentence.begin(), sentence.end(), re); it != std::sregex_iterator(); ++it) {
    EXPECT_FALSE(parsed.contains((*it)[2])) << (*it)[2];
    parsed[(*it)[2]] = std::stol((*it)[1]);
  }
  EXPECT_EQ(parsed, d.amenity_counts);
}

TEST(RenderPreprompt, DeterministicAndNoDigitGrouping) {
  AreaDescriptor d = park_descriptor();
  d.road_lengths_m["residential"] = 12345;
  const std::string a = render_preprompt(d);
  EXPECT_EQ(a, render_preprompt(d));
  EXPECT_NE(a.find("12345 meters of residential road"), std::string::npos);
}

TEST(NormalizeSpaces, CollapsesAndTrims) {
  EXPECT_EQ(normalize_spaces("  a  b\t\nc  "), "a b c");
  EXPECT_EQ(normalize_spaces(""), "");
}
