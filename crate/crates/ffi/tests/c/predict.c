#include <stdio.h>
#include <string.h>

#include "funcnet.h"

int main(int argc, char **argv) {
  if (argc != 2) {
    fprintf(stderr, "usage: %s MODEL\n", argv[0]);
    return 64;
  }
  FuncnetPipeline *p = NULL;
  FuncnetStatus st = funcnet_pipeline_load(argv[1], &p);
  if (st != FUNCNET_STATUS_OK) {
    fprintf(stderr, "load: %d %s\n", (int)st, funcnet_last_error());
    return 1;
  }
  const double t[] = {0.1, 0.35, 0.6, 0.9};
  const double y[] = {0.2, -0.4, 0.1, 0.3};
  const double *times[] = {t};
  const double *values[] = {y};
  const size_t lens[] = {4};
  double value = 0.0;
  int32_t label = -2;
  st = funcnet_pipeline_predict(p, 1, lens, times, values, &value, &label);
  if (st != FUNCNET_STATUS_OK) {
    fprintf(stderr, "predict: %d %s\n", (int)st, funcnet_last_error());
    return 1;
  }
  printf("%.17g %d\n", value, label);

  st = funcnet_pipeline_load("/nonexistent.json", &p);
  if (st != FUNCNET_STATUS_IO || funcnet_last_error() == NULL) {
    return 2;
  }
  funcnet_pipeline_free(p);

  uint64_t n = 0;
  if (funcnet_count_params(FUNCNET_MODEL_KIND_GRU, 32, 21, 0, &n) != FUNCNET_STATUS_OK) {
    return 3;
  }
  printf("%llu %s\n", (unsigned long long)n, funcnet_version());
  return 0;
}
