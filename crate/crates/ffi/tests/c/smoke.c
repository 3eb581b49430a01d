#include <math.h>
#include <stdio.h>
#include "pmcvar.h"

#define CHECK(call)                                                        \
  do {                                                                     \
    PmcvarStatus s_ = (call);                                              \
    if (s_ != PMCVAR_STATUS_OK) {                                          \
      const char *m_ = pmcvar_last_error_message();                        \
      fprintf(stderr, "%s -> %d: %s\n", #call, (int)s_, m_ ? m_ : "?");    \
      return 1;                                                            \
    }                                                                      \
  } while (0)

int main(void) {
  PmcvarPanel *panel = NULL;
  CHECK(pmcvar_panel_synthetic(8, 80, 2, 11, &panel));
  size_t n = 0, rows = 0;
  CHECK(pmcvar_panel_dims(panel, &n, &rows));
  if (n != 8 || rows != 81) return 2;

  PmcvarModelOptions opts = pmcvar_model_options_default();
  opts.p = 2;
  opts.gamma = 0.5;
  PmcvarPortfolio *pf = NULL;
  CHECK(pmcvar_solve(panel, PMCVAR_STRATEGY_UNIFIED, &opts, &pf));
  double w[8];
  CHECK(pmcvar_portfolio_weights(pf, w, 8));
  double sum = 0.0;
  for (int i = 0; i < 8; i++) sum += w[i];
  if (fabs(sum - 1.0) > 1e-8) return 3;
  size_t reps[8], count = 0;
  CHECK(pmcvar_portfolio_representatives(pf, reps, 8, &count));
  if (count != 2) return 4;
  PmcvarSolveSummary sm;
  CHECK(pmcvar_portfolio_summary(pf, &sm));
  if (fabs(sm.objective - sm.cvar) > 1e-8) return 5;

  PmcvarReport *rep = NULL;
  CHECK(pmcvar_backtest(panel, PMCVAR_STRATEGY_INDEX, &opts, 40, 20, &rep));
  size_t problems = 0;
  double av = 0.0, sh = 0.0;
  CHECK(pmcvar_report_measures(rep, &av, &sh, &problems));
  if (problems != 2) return 6;

  opts.mu0_index = 0;
  opts.mu0 = 1.0;
  PmcvarPortfolio *none = NULL;
  if (pmcvar_solve(panel, PMCVAR_STRATEGY_CVAR_CC, &opts, &none) != PMCVAR_STATUS_INFEASIBLE) return 7;
  if (pmcvar_last_error_message() == NULL) return 8;

  pmcvar_report_free(rep);
  pmcvar_portfolio_free(pf);
  pmcvar_panel_free(panel);
  printf("ok %zu %.6f\n", count, sm.cvar);
  return 0;
}
