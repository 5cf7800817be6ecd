// Copyright 2026 The dtnlab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License"); you may not
// use this file except in compliance with the License. You may obtain a copy
// of the License at http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS, WITHOUT
// WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.

#include "dtnlab/data/census.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>

#include "dtnlab/core/error.hpp"

namespace dtnlab::data {

namespace {

constexpr std::size_t kNumFields = 42;
constexpr std::size_t kMaritalField = 7;
constexpr std::size_t kIncomeField = 41;

// Field order of the published files. The set of continuous fields follows
// the dataset documentation; everything else, including small numeric codes
// (industry/occupation recodes, veterans benefits, year), is categorical.
struct RawField {
  const char* name;
  bool continuous;
};

constexpr RawField kFields[kNumFields] = {
    {"age", true},
    {"class_worker", false},
    {"det_ind_code", false},
    {"det_occ_code", false},
    {"education", false},
    {"wage_per_hour", true},
    {"hs_college", false},
    {"marital_stat", false},  // becomes the marital task label
    {"major_ind_code", false},
    {"major_occ_code", false},
    {"race", false},
    {"hisp_origin", false},
    {"sex", false},
    {"union_member", false},
    {"unemp_reason", false},
    {"full_or_part_emp", false},
    {"capital_gains", true},
    {"capital_losses", true},
    {"stock_dividends", true},
    {"tax_filer_stat", false},
    {"region_prev_res", false},
    {"state_prev_res", false},
    {"det_hh_fam_stat", false},
    {"det_hh_summ", false},
    {"instance_weight", true},
    {"mig_chg_msa", false},
    {"mig_chg_reg", false},
    {"mig_move_reg", false},
    {"mig_same", false},
    {"mig_prev_sunbelt", false},
    {"num_emp", true},
    {"fam_under_18", false},
    {"country_father", false},
    {"country_mother", false},
    {"country_self", false},
    {"citizenship", false},
    {"own_or_self", false},
    {"vet_question", false},
    {"vet_benefits", false},
    {"weeks_worked", true},
    {"year", false},
    {"income_50k", false},  // becomes the income task label
};

std::string strip(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
  return s.substr(b, e - b);
}

struct RawRows {
  // columns[i] holds field i of every record, whitespace-stripped.
  std::vector<std::vector<std::string>> columns;
  std::size_t n_rows = 0;
};

RawRows read_raw(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "census", "cannot open '" + path + "'");
  RawRows raw;
  raw.columns.resize(kNumFields);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (strip(line).empty()) continue;
    std::size_t field = 0, begin = 0;
    for (std::size_t i = 0; i <= line.size(); ++i) {
      if (i == line.size() || line[i] == ',') {
        if (field >= kNumFields) break;
        raw.columns[field].push_back(strip(line.substr(begin, i - begin)));
        ++field;
        begin = i + 1;
      }
    }
    require(field == kNumFields, "census",
            "malformed row " + std::to_string(line_no) + " in '" + path + "': expected " +
                std::to_string(kNumFields) + " fields, got " + std::to_string(field));
    ++raw.n_rows;
  }
  require(raw.n_rows > 0, "census", "'" + path + "' contains no records");
  return raw;
}

double parse_continuous(const std::string& v, std::size_t row, const char* field) {
  const char* s = v.c_str();
  char* end = nullptr;
  const double x = std::strtod(s, &end);
  require(end != s && *end == '\0' && std::isfinite(x), "census",
          std::string("malformed row ") + std::to_string(row + 1) + ": field '" + field +
              "' is not numeric ('" + v + "')");
  return x;
}

std::int8_t income_label(const std::string& v, std::size_t row) {
  std::string s = v;
  if (!s.empty() && s.back() == '.') s.pop_back();
  s = strip(s);
  if (s == "50000+" || s == ">50K") return 1;
  if (s == "- 50000" || s == "-50000" || s == "<=50K") return 0;
  fail("census", "malformed row " + std::to_string(row + 1) + ": unrecognized income field '" +
                     v + "'");
}

}  // namespace

const std::vector<std::string>& census_column_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> v;
    for (const auto& f : kFields) v.emplace_back(f.name);
    return v;
  }();
  return names;
}

CensusData load_census_income(const std::string& train_path, const std::string& test_path,
                              const CensusOptions& options) {
  const RawRows train_raw = read_raw(train_path);
  const RawRows test_raw = read_raw(test_path);

  // Predictor features: every field except the two labels.
  std::vector<FeatureSpec> specs;
  std::vector<std::size_t> predictor_fields;
  for (std::size_t i = 0; i < kNumFields; ++i) {
    if (i == kMaritalField || i == kIncomeField) continue;
    FeatureSpec f;
    f.name = kFields[i].name;
    f.kind = kFields[i].continuous ? FeatureKind::kContinuous : FeatureKind::kCategorical;
    f.embedding_dim = 16;
    specs.push_back(std::move(f));
    predictor_fields.push_back(i);
  }

  // Vocabularies from the train split only; id 0 reserved for OOV.
  std::vector<std::map<std::string, std::int32_t>> vocab_maps(predictor_fields.size());
  for (std::size_t p = 0; p < predictor_fields.size(); ++p) {
    if (!specs[p].is_categorical()) continue;
    std::set<std::string> distinct(train_raw.columns[predictor_fields[p]].begin(),
                                   train_raw.columns[predictor_fields[p]].end());
    specs[p].vocab.clear();
    specs[p].vocab.push_back("<oov>");
    std::int32_t next = 1;
    for (const auto& v : distinct) {
      vocab_maps[p][v] = next++;
      specs[p].vocab.push_back(v);
    }
    specs[p].vocab_size = static_cast<std::size_t>(next);
  }

  // Train-split standardization stats.
  for (std::size_t p = 0; p < predictor_fields.size(); ++p) {
    if (specs[p].is_categorical()) continue;
    const auto& col = train_raw.columns[predictor_fields[p]];
    double sum = 0.0;
    std::vector<double> vals(col.size());
    for (std::size_t r = 0; r < col.size(); ++r) {
      vals[r] = parse_continuous(col[r], r, specs[p].name.c_str());
      sum += vals[r];
    }
    const double mean = sum / static_cast<double>(col.size());
    double ss = 0.0;
    for (const double v : vals) ss += (v - mean) * (v - mean);
    const double stddev = std::sqrt(ss / static_cast<double>(col.size()));
    specs[p].mean = mean;
    specs[p].stddev = stddev > 0.0 ? stddev : 1.0;
  }

  FeatureSchema schema(std::move(specs), {"income", "marital"});

  auto encode = [&](const RawRows& raw) {
    Dataset ds(schema, raw.n_rows);
    for (std::size_t p = 0; p < predictor_fields.size(); ++p) {
      const auto& f = schema.features()[p];
      const auto& col = raw.columns[predictor_fields[p]];
      if (f.is_categorical()) {
        auto& out = ds.categorical_column(schema.column_of(p));
        out.resize(col.size());
        const auto& vm = vocab_maps[p];
        for (std::size_t r = 0; r < col.size(); ++r) {
          auto it = vm.find(col[r]);
          out[r] = it == vm.end() ? 0 : it->second;  // OOV -> 0, never an error
        }
      } else {
        auto& out = ds.continuous_column(schema.column_of(p));
        out.resize(col.size());
        for (std::size_t r = 0; r < col.size(); ++r) {
          const double v = parse_continuous(col[r], r, f.name.c_str());
          out[r] = static_cast<float>((v - f.mean) / f.stddev);
        }
      }
    }
    auto& income = ds.label_column(0);
    auto& marital = ds.label_column(1);
    income.resize(raw.n_rows);
    marital.resize(raw.n_rows);
    for (std::size_t r = 0; r < raw.n_rows; ++r) {
      income[r] = income_label(raw.columns[kIncomeField][r], r);
      const bool never_married = raw.columns[kMaritalField][r] == "Never married";
      marital[r] = options.marital_positive_is_never_married ? never_married : !never_married;
    }
    ds.set_row_count(raw.n_rows);
    ds.check_consistent(schema);
    return ds;
  };

  CensusData out{encode(train_raw), encode(test_raw), schema};
  return out;
}

}  // namespace dtnlab::data
