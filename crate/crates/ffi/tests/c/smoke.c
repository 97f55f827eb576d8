#include <stdio.h>
#include <string.h>

#include "plugsearch.h"

#define CHECK(call)                                                        \
  do {                                                                     \
    PsStatus status_ = (call);                                             \
    if (status_ != PS_STATUS_OK) {                                         \
      fprintf(stderr, "%s failed (%d): %s\n", #call, (int)status_,         \
              ps_last_error() ? ps_last_error() : "?");                    \
      return 1;                                                            \
    }                                                                      \
  } while (0)

int main(int argc, char **argv) {
  char source[1024], shards[1024], index[1024], archive[1024];
  if (argc != 2) {
    fprintf(stderr, "usage: smoke <workdir>\n");
    return 2;
  }
  snprintf(source, sizeof source, "%s/corpus.jsonl", argv[1]);
  snprintf(shards, sizeof shards, "%s/shards", argv[1]);
  snprintf(index, sizeof index, "%s/index", argv[1]);
  snprintf(archive, sizeof archive, "%s/index.tar.gz", argv[1]);

  FILE *f = fopen(source, "w");
  if (!f) return 1;
  fputs("{\"id\":\"D1\",\"text\":\"a b c a\"}\n", f);
  fputs("{\"id\":\"D2\",\"text\":\"a a a d\"}\n", f);
  fputs("{\"id\":\"D3\",\"text\":\"b c d e\"}\n", f);
  fclose(f);

  CHECK(ps_shard_jsonl(source, "text", "id", "300B", shards));
  CHECK(ps_build_index(shards, index, 2));

  PsIndex *idx = NULL;
  CHECK(ps_index_open(index, &idx));
  if (ps_index_num_docs(idx) != 3) return 1;

  PsResults *results = NULL;
  CHECK(ps_search(idx, "a", 10, &results));
  if (ps_results_len(results) != 2) return 1;
  const char *id = NULL;
  double score = 0.0;
  CHECK(ps_results_get(results, 0, &id, &score));
  if (strcmp(id, "D2") != 0 || score <= 0.0) return 1;
  if (ps_results_get(results, 5, &id, &score) != PS_STATUS_OUT_OF_BOUNDS) return 1;

  char *json = NULL;
  CHECK(ps_result_page_json(idx, results, -1, 1, &json));
  if (!strstr(json, "\"D1\"")) return 1;
  ps_string_free(json);

  PsResults *none = NULL;
  if (ps_search(idx, "", 10, &none) != PS_STATUS_EMPTY_QUERY || none != NULL) return 1;
  if (ps_last_error() == NULL) return 1;

  bool over = false;
  CHECK(ps_pack_index(index, archive, "demo", 1000000000ULL, &over));
  if (over) return 1;

  ps_results_free(results);
  ps_index_free(idx);
  printf("ok %s\n", ps_version());
  return 0;
}
