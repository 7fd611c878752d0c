#include "inkstat/data_model.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <chrono>
#include <fmt/format.h>
#include <fstream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "inkstat/csv.hpp"
#include "inkstat/error.hpp"

namespace inkstat {
namespace {

constexpr std::array<std::string_view, 8> kRaceNames = {
    "pacific_islander", "american_alaskan_indian", "black",       "asian",
    "latino_hispanic",  "white",                   "multiracial", "other"};

std::string lower(std::string_view text) {
  std::string out(text);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  return out;
}

std::string_view trim(std::string_view text) {
  while (!text.empty() && std::isspace(static_cast<unsigned char>(text.front()))) text.remove_prefix(1);
  while (!text.empty() && std::isspace(static_cast<unsigned char>(text.back()))) text.remove_suffix(1);
  return text;
}

std::optional<long long> parse_integer(std::string_view text) {
  text = trim(text);
  long long value = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size() || text.empty()) return std::nullopt;
  return value;
}

std::optional<double> parse_real(std::string_view text) {
  text = trim(text);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size() || text.empty()) return std::nullopt;
  return value;
}

std::optional<bool> parse_flag(std::string_view text, std::initializer_list<std::string_view> truthy,
                               std::initializer_list<std::string_view> falsy) {
  const std::string key = lower(trim(text));
  for (auto t : truthy)
    if (key == t) return true;
  for (auto f : falsy)
    if (key == f) return false;
  return std::nullopt;
}

std::optional<bool> parse_binary(std::string_view text) {
  return parse_flag(text, {"1", "true", "yes", "y"}, {"0", "false", "no", "n"});
}

std::optional<int> parse_fitzpatrick(std::string_view text) {
  static constexpr std::array<std::string_view, 6> roman = {"i", "ii", "iii", "iv", "v", "vi"};
  const std::string key = lower(trim(text));
  for (std::size_t i = 0; i < roman.size(); ++i)
    if (key == roman[i]) return static_cast<int>(i + 1);
  const auto value = parse_integer(key);
  if (value && *value >= 1 && *value <= 6) return static_cast<int>(*value);
  return std::nullopt;
}

// Resolves every expected column to its position; throws SchemaError otherwise.
template <std::size_t N>
std::array<std::size_t, N> resolve_columns(const csv::Table& table, const std::string_view (&columns)[N],
                                           std::string_view file) {
  std::array<std::size_t, N> index{};
  for (std::size_t i = 0; i < N; ++i) {
    index[i] = table.column(columns[i]);
    if (index[i] == std::string_view::npos) {
      throw SchemaError(fmt::format("{}: header is missing column '{}'", file, columns[i]));
    }
  }
  return index;
}

// Field accessor that tolerates short rows (treated as missing).
struct FieldReader {
  const csv::Row& row;
  std::string_view file;
  std::vector<Issue>& issues;

  std::string_view raw(std::size_t column) const {
    return column < row.fields.size() ? trim(row.fields[column]) : std::string_view{};
  }

  template <class T, class Parser>
  std::optional<T> optional(std::size_t column, std::string_view name, Parser parser) const {
    const std::string_view text = raw(column);
    if (text.empty()) return std::nullopt;
    auto value = parser(text);
    if (!value) {
      issues.push_back({IssueKind::invalid_value, std::string(file), row.line,
                        fmt::format("column '{}': cannot parse '{}'; treated as missing", name, text)});
      return std::nullopt;
    }
    return static_cast<T>(*value);
  }

  std::optional<int> count(std::size_t column, std::string_view name) const {
    return optional<int>(column, name, [](std::string_view t) -> std::optional<long long> {
      auto v = parse_integer(t);
      if (v && *v < 0) return std::nullopt;
      return v;
    });
  }
};

void rows_to_patients(const csv::Table& table, std::string_view file, Dataset& data) {
  const auto col = resolve_columns(table, kPatientColumns, file);
  std::unordered_set<std::string> seen;
  for (const auto& row : table.rows) {
    FieldReader r{row, file, data.issues};
    PatientRecord p;
    p.patient_id = std::string(r.raw(col[0]));
    if (p.patient_id.empty()) {
      data.issues.push_back({IssueKind::unparseable_row, std::string(file), row.line, "missing patient_id"});
      continue;
    }
    if (!seen.insert(p.patient_id).second) {
      data.issues.push_back(
          {IssueKind::duplicate_id, std::string(file), row.line, fmt::format("duplicate patient_id '{}'", p.patient_id)});
      continue;
    }
    p.age = r.count(col[1], "age");
    p.sex_male = r.optional<bool>(col[2], "sex", [](std::string_view t) {
      return parse_flag(t, {"male", "m", "1"}, {"female", "f", "0"});
    });
    p.hispanic = r.optional<bool>(col[3], "ethnicity", [](std::string_view t) {
      return parse_flag(t, {"hispanic", "hispanic_latino", "latino", "1", "yes", "true"},
                        {"non_hispanic", "not_hispanic", "0", "no", "false"});
    });
    p.race = r.optional<Race>(col[4], "race", [](std::string_view t) { return parse_race(t); });
    p.treatment_total = r.count(col[5], "treatment_total");
    p.total_tattoos = r.count(col[6], "total_tattoos");
    p.fitzpatrick = r.optional<int>(col[7], "fitzpatrick", parse_fitzpatrick);
    p.any_complication = r.optional<bool>(col[8], "complications", parse_binary);
    data.patients.push_back(std::move(p));
  }
}

void rows_to_tattoos(const csv::Table& table, std::string_view file, Dataset& data) {
  const auto col = resolve_columns(table, kTattooColumns, file);
  std::unordered_set<std::string> patient_ids;
  for (const auto& p : data.patients) patient_ids.insert(p.patient_id);
  std::unordered_set<std::string> seen;
  for (const auto& row : table.rows) {
    FieldReader r{row, file, data.issues};
    TattooRecord t;
    t.tattoo_id = std::string(r.raw(col[0]));
    t.patient_id = std::string(r.raw(col[1]));
    if (t.tattoo_id.empty() || t.patient_id.empty()) {
      data.issues.push_back(
          {IssueKind::unparseable_row, std::string(file), row.line, "missing tattoo_id or patient_id"});
      continue;
    }
    if (!seen.insert(t.tattoo_id).second) {
      data.issues.push_back(
          {IssueKind::duplicate_id, std::string(file), row.line, fmt::format("duplicate tattoo_id '{}'", t.tattoo_id)});
      continue;
    }
    if (!patient_ids.contains(t.patient_id)) {
      data.issues.push_back({IssueKind::dangling_reference, std::string(file), row.line,
                             fmt::format("tattoo '{}' references unknown patient '{}'", t.tattoo_id, t.patient_id)});
      continue;
    }
    const std::string_view category = r.raw(col[2]);
    if (!category.empty()) t.body_category = lower(category);
    t.tattoo_age = r.count(col[3], "tattoo_age");
    t.colored = r.optional<bool>(col[4], "colors", [](std::string_view s) {
      return parse_flag(s, {"colored", "color", "1", "yes", "true"}, {"black_blue", "black/blue", "0", "no", "false"});
    });
    t.professional = r.optional<bool>(col[5], "professional", parse_binary);
    t.treatment_total = r.count(col[6], "treatment_total");
    t.fitzpatrick = r.optional<int>(col[7], "fitzpatrick", parse_fitzpatrick);
    t.any_complication = r.optional<bool>(col[8], "complications", parse_binary);
    data.tattoos.push_back(std::move(t));
  }
}

struct PendingEvent {
  TreatmentEvent event;
  std::int64_t absolute_day;
};

void rows_to_series(const csv::Table& table, std::string_view file, Dataset& data) {
  const auto col = resolve_columns(table, kTreatmentColumns, file);
  std::unordered_set<std::string> tattoo_ids;
  for (const auto& t : data.tattoos) tattoo_ids.insert(t.tattoo_id);

  std::vector<std::string> order;
  std::unordered_map<std::string, std::vector<PendingEvent>> by_tattoo;
  for (const auto& row : table.rows) {
    FieldReader r{row, file, data.issues};
    const auto reject = [&](IssueKind kind, std::string message) {
      data.issues.push_back({kind, std::string(file), row.line, std::move(message)});
    };
    PendingEvent pending;
    TreatmentEvent& e = pending.event;
    e.tattoo_id = std::string(r.raw(col[0]));
    if (e.tattoo_id.empty()) {
      reject(IssueKind::unparseable_row, "missing tattoo_id");
      continue;
    }
    if (!tattoo_ids.contains(e.tattoo_id)) {
      reject(IssueKind::dangling_reference, fmt::format("event references unknown tattoo '{}'", e.tattoo_id));
      continue;
    }
    const std::string_view day_text = r.raw(col[1]);
    if (const auto day = parse_integer(day_text)) {
      if (*day < 0) {
        reject(IssueKind::invalid_value, fmt::format("negative day '{}'", day_text));
        continue;
      }
      pending.absolute_day = *day;
    } else if (const auto date = parse_iso_date(day_text)) {
      pending.absolute_day = *date;
    } else {
      reject(IssueKind::unparseable_row, fmt::format("cannot parse day '{}'", day_text));
      continue;
    }
    const auto fluence = parse_real(r.raw(col[2]));
    const auto spot = parse_real(r.raw(col[3]));
    const auto wavelength = parse_integer(r.raw(col[4]));
    const auto frequency = parse_integer(r.raw(col[5]));
    const auto complication = parse_binary(r.raw(col[6]));
    if (!fluence || !spot || !wavelength || !frequency || !complication) {
      reject(IssueKind::unparseable_row, "missing or unparseable treatment setting");
      continue;
    }
    if (!(*fluence > 0.0) || !(*spot > 0.0) || (*wavelength != 532 && *wavelength != 1064) ||
        (*frequency != 5 && *frequency != 10)) {
      reject(IssueKind::invalid_value,
             fmt::format("setting out of range (fluence={}, spot={}, wavelength={}, frequency={})", *fluence, *spot,
                         *wavelength, *frequency));
      continue;
    }
    e.fluence = *fluence;
    e.spot_size = *spot;
    e.wavelength_nm = static_cast<int>(*wavelength);
    e.frequency_hz = static_cast<int>(*frequency);
    e.complication_observed = *complication;
    auto [it, inserted] = by_tattoo.try_emplace(e.tattoo_id);
    if (inserted) order.push_back(e.tattoo_id);
    it->second.push_back(std::move(pending));
  }

  for (const auto& id : order) {
    auto& pending = by_tattoo[id];
    std::stable_sort(pending.begin(), pending.end(),
                     [](const PendingEvent& a, const PendingEvent& b) { return a.absolute_day < b.absolute_day; });
    const std::int64_t first = pending.front().absolute_day;
    TreatmentSeries series{id, {}};
    series.events.reserve(pending.size());
    for (auto& p : pending) {
      p.event.day = static_cast<int>(p.absolute_day - first);
      series.events.push_back(std::move(p.event));
    }
    data.series.push_back(std::move(series));
  }
}

std::string fmt_opt(const std::optional<int>& v) { return v ? std::to_string(*v) : std::string{}; }

std::string fmt_opt(const std::optional<bool>& v, std::string_view yes, std::string_view no) {
  if (!v) return {};
  return std::string(*v ? yes : no);
}

template <std::size_t N>
std::vector<std::string> header_of(const std::string_view (&columns)[N]) {
  return {std::begin(columns), std::end(columns)};
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
}

}  // namespace

std::string_view to_string(Race race) { return kRaceNames[static_cast<std::size_t>(race)]; }

std::optional<Race> parse_race(std::string_view text) {
  std::string key = lower(trim(text));
  std::replace(key.begin(), key.end(), ' ', '_');
  std::replace(key.begin(), key.end(), '/', '_');
  for (std::size_t i = 0; i < kRaceNames.size(); ++i)
    if (key == kRaceNames[i]) return static_cast<Race>(i);
  return std::nullopt;
}

std::string_view to_string(IssueKind kind) {
  switch (kind) {
    case IssueKind::dangling_reference:
      return "dangling_reference";
    case IssueKind::unparseable_row:
      return "unparseable_row";
    case IssueKind::invalid_value:
      return "invalid_value";
    case IssueKind::duplicate_id:
      return "duplicate_id";
    case IssueKind::zero_variance:
      return "zero_variance";
  }
  return "unknown";
}

const PatientRecord* Dataset::find_patient(std::string_view id) const {
  for (const auto& p : patients)
    if (p.patient_id == id) return &p;
  return nullptr;
}

const TattooRecord* Dataset::find_tattoo(std::string_view id) const {
  for (const auto& t : tattoos)
    if (t.tattoo_id == id) return &t;
  return nullptr;
}

const TreatmentSeries* Dataset::find_series(std::string_view id) const {
  for (const auto& s : series)
    if (s.tattoo_id == id) return &s;
  return nullptr;
}

std::optional<std::int64_t> parse_iso_date(std::string_view text) {
  text = trim(text);
  if (text.size() != 10 || text[4] != '-' || text[7] != '-') return std::nullopt;
  const auto y = parse_integer(text.substr(0, 4));
  const auto m = parse_integer(text.substr(5, 2));
  const auto d = parse_integer(text.substr(8, 2));
  if (!y || !m || !d) return std::nullopt;
  const std::chrono::year_month_day ymd{std::chrono::year{static_cast<int>(*y)},
                                        std::chrono::month{static_cast<unsigned>(*m)},
                                        std::chrono::day{static_cast<unsigned>(*d)}};
  if (!ymd.ok()) return std::nullopt;
  return std::chrono::sys_days{ymd}.time_since_epoch().count();
}

Dataset ingest_text(std::string_view patients_csv, std::string_view tattoos_csv, std::string_view treatments_csv) {
  Dataset data;
  rows_to_patients(csv::parse(patients_csv), "patients.csv", data);
  rows_to_tattoos(csv::parse(tattoos_csv), "tattoos.csv", data);
  rows_to_series(csv::parse(treatments_csv), "treatments.csv", data);
  return data;
}

Dataset ingest(const std::filesystem::path& patients_csv, const std::filesystem::path& tattoos_csv,
               const std::filesystem::path& treatments_csv) {
  Dataset data;
  rows_to_patients(csv::read_file(patients_csv), patients_csv.filename().string(), data);
  rows_to_tattoos(csv::read_file(tattoos_csv), tattoos_csv.filename().string(), data);
  rows_to_series(csv::read_file(treatments_csv), treatments_csv.filename().string(), data);
  return data;
}

std::string patients_to_csv(const Dataset& data) {
  std::ostringstream out;
  csv::write_row(out, header_of(kPatientColumns));
  for (const auto& p : data.patients) {
    const std::vector<std::string> fields = {
        p.patient_id,
        fmt_opt(p.age),
        fmt_opt(p.sex_male, "male", "female"),
        fmt_opt(p.hispanic, "hispanic", "non_hispanic"),
        p.race ? std::string(to_string(*p.race)) : std::string{},
        fmt_opt(p.treatment_total),
        fmt_opt(p.total_tattoos),
        fmt_opt(p.fitzpatrick),
        fmt_opt(p.any_complication, "1", "0"),
    };
    csv::write_row(out, fields);
  }
  return out.str();
}

std::string tattoos_to_csv(const Dataset& data) {
  std::ostringstream out;
  csv::write_row(out, header_of(kTattooColumns));
  for (const auto& t : data.tattoos) {
    const std::vector<std::string> fields = {
        t.tattoo_id,
        t.patient_id,
        t.body_category.value_or(""),
        fmt_opt(t.tattoo_age),
        fmt_opt(t.colored, "colored", "black_blue"),
        fmt_opt(t.professional, "1", "0"),
        fmt_opt(t.treatment_total),
        fmt_opt(t.fitzpatrick),
        fmt_opt(t.any_complication, "1", "0"),
    };
    csv::write_row(out, fields);
  }
  return out.str();
}

std::string treatments_to_csv(const Dataset& data) {
  std::ostringstream out;
  csv::write_row(out, header_of(kTreatmentColumns));
  for (const auto& s : data.series) {
    for (const auto& e : s.events) {
      const std::vector<std::string> fields = {
          e.tattoo_id,
          std::to_string(e.day),
          fmt::format("{}", e.fluence),
          fmt::format("{}", e.spot_size),
          std::to_string(e.wavelength_nm),
          std::to_string(e.frequency_hz),
          e.complication_observed ? "1" : "0",
      };
      csv::write_row(out, fields);
    }
  }
  return out.str();
}

void export_dataset(const Dataset& data, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_text(dir / "patients.csv", patients_to_csv(data));
  write_text(dir / "tattoos.csv", tattoos_to_csv(data));
  write_text(dir / "treatments.csv", treatments_to_csv(data));
}

}  // namespace inkstat
