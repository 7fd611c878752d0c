#pragma once

// Patient, tattoo and treatment records; CSV ingestion and export.
//
// Missing values are explicit (std::optional) and are never imputed:
// each analysis drops incomplete rows for the variables it touches.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace inkstat {

enum class Race {
  pacific_islander,
  american_alaskan_indian,
  black,
  asian,
  latino_hispanic,
  white,
  multiracial,
  other,
};

std::string_view to_string(Race race);
std::optional<Race> parse_race(std::string_view text);

struct PatientRecord {
  std::string patient_id;
  std::optional<int> age;
  std::optional<bool> sex_male;
  std::optional<bool> hispanic;
  std::optional<Race> race;
  std::optional<int> treatment_total;
  std::optional<int> total_tattoos;
  std::optional<int> fitzpatrick;  // 1 (I) .. 6 (VI)
  std::optional<bool> any_complication;

  bool operator==(const PatientRecord&) const = default;
};

struct TattooRecord {
  std::string tattoo_id;
  std::string patient_id;
  std::optional<std::string> body_category;
  std::optional<int> tattoo_age;
  std::optional<bool> colored;  // true when the ink is not only black/blue
  std::optional<bool> professional;
  std::optional<int> treatment_total;
  std::optional<int> fitzpatrick;
  std::optional<bool> any_complication;

  bool operator==(const TattooRecord&) const = default;
};

struct TreatmentEvent {
  std::string tattoo_id;
  int day = 0;             // days since the tattoo's first treatment
  double fluence = 0.0;    // J/cm^2
  double spot_size = 0.0;  // mm
  int wavelength_nm = 1064;
  int frequency_hz = 10;
  bool complication_observed = false;

  bool operator==(const TreatmentEvent&) const = default;
};

// Events of one tattoo, ascending by day (stable for equal days).
struct TreatmentSeries {
  std::string tattoo_id;
  std::vector<TreatmentEvent> events;

  std::size_t size() const { return events.size(); }
  bool operator==(const TreatmentSeries&) const = default;
};

enum class IssueKind {
  dangling_reference,
  unparseable_row,
  invalid_value,
  duplicate_id,
  zero_variance,
};

std::string_view to_string(IssueKind kind);

struct Issue {
  IssueKind kind;
  std::string source;  // file name or analysis stage
  std::size_t line = 0;
  std::string message;
};

struct Dataset {
  std::vector<PatientRecord> patients;
  std::vector<TattooRecord> tattoos;
  std::vector<TreatmentSeries> series;  // ordered by first appearance of the tattoo
  std::vector<Issue> issues;

  const PatientRecord* find_patient(std::string_view id) const;
  const TattooRecord* find_tattoo(std::string_view id) const;
  const TreatmentSeries* find_series(std::string_view id) const;
};

// Fixed column orders of the three input files.
inline constexpr std::string_view kPatientColumns[] = {"patient_id",      "age",           "sex",
                                                       "ethnicity",       "race",          "treatment_total",
                                                       "total_tattoos",   "fitzpatrick",   "complications"};
inline constexpr std::string_view kTattooColumns[] = {"tattoo_id",       "patient_id",  "category",
                                                      "tattoo_age",      "colors",      "professional",
                                                      "treatment_total", "fitzpatrick", "complications"};
inline constexpr std::string_view kTreatmentColumns[] = {"tattoo_id",     "day",          "fluence_j_cm2",
                                                         "spot_size_mm",  "wavelength_nm", "frequency_hz",
                                                         "complication"};

// Reads the three CSV files. Rows with unusable required keys are moved to
// Dataset::issues rather than dropped silently; optional fields that fail to
// parse become missing and are also reported. Throws IoError for unreadable
// files and SchemaError (naming the column) for headers missing a column.
Dataset ingest(const std::filesystem::path& patients_csv, const std::filesystem::path& tattoos_csv,
               const std::filesystem::path& treatments_csv);

// Same, from in-memory CSV text.
Dataset ingest_text(std::string_view patients_csv, std::string_view tattoos_csv, std::string_view treatments_csv);

std::string patients_to_csv(const Dataset& data);
std::string tattoos_to_csv(const Dataset& data);
std::string treatments_to_csv(const Dataset& data);

// Writes patients.csv, tattoos.csv and treatments.csv into dir.
void export_dataset(const Dataset& data, const std::filesystem::path& dir);

// Days since 1970-01-01 for an ISO "YYYY-MM-DD" date, or nullopt.
std::optional<std::int64_t> parse_iso_date(std::string_view text);

}  // namespace inkstat
