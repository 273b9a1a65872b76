// Minimal end-to-end usage: generate a two-school fixture, train on one
// school, continue on the other, and print the evaluation reports.

#include <iostream>

#include "ikt/continual.hpp"
#include "ikt/ingest.hpp"

using namespace ikt;

int main() {
  ingest::SyntheticSpec data;
  data.num_schools = 2;
  data.users_per_school = 20;
  data.problems_per_school = 30;
  data.responses_per_user = 60;
  data.overlap_fraction = 0.5;
  data.noise_rate = 0.1;
  data.seed = 7;
  auto datasets = ingest::generate_synthetic(data);

  continual::ScenarioSpec spec;
  spec.tasks = {"syn0", "syn1"};
  spec.model.d_model = 32;
  spec.model.num_heads = 4;
  spec.model.num_blocks = 2;
  spec.model.max_seq_len = 20;
  spec.model.v_cap = 128;
  spec.train_cfg.epochs = 10;
  spec.train_cfg.batch_size = 16;
  spec.train_cfg.seed = 7;

  auto result = continual::run_scenario(spec, datasets);
  std::cout << result.to_csv();
  for (const auto& d : continual::forgetting_summary(result))
    std::cout << "task " << d.task << " at stage " << d.stage
              << ": d_auroc = " << (d.d_auroc ? *d.d_auroc : 0.0) << "\n";
  return 0;
}
