#include <math.h>
#include <stdio.h>
#include <stdlib.h>

#include "hnswlab.h"

#define CHECK(call)                                                          \
    do {                                                                     \
        HnswlabStatus s_ = (call);                                           \
        if (s_ != HNSWLAB_STATUS_OK) {                                       \
            fprintf(stderr, "%s failed (%d): %s\n", #call, (int)s_,          \
                    hnswlab_last_error());                                   \
            return 1;                                                        \
        }                                                                    \
    } while (0)

int main(int argc, char **argv) {
    if (argc < 2) return 2;
    enum { N = 400, DIM = 8 };
    float *data = malloc(sizeof(float) * N * DIM);
    unsigned s = 12345;
    for (int i = 0; i < N * DIM; i++) {
        s = s * 1103515245u + 12345u;
        data[i] = (float)((s >> 8) % 1000) / 1000.0f - 0.5f;
    }
    HnswlabDataset *ds = NULL;
    CHECK(hnswlab_dataset_from_f32(data, N, DIM, &ds));
    if (hnswlab_dataset_len(ds) != N || hnswlab_dataset_dim(ds) != DIM) return 1;

    HnswlabParams p = hnswlab_params_default();
    p.ef_construction = 64;
    p.order = HNSWLAB_ORDER_LID_DESC;
    p.lid_neighbours = 20;
    HnswlabIndex *idx = NULL;
    CHECK(hnswlab_index_build(ds, &p, &idx));

    uint64_t ids[10];
    double dists[10];
    size_t got = 0;
    CHECK(hnswlab_index_search(idx, data + 17 * DIM, DIM, 10, N, ids, dists, &got));
    if (got != 10 || ids[0] != 17 || dists[0] != 0.0) {
        fprintf(stderr, "unexpected nearest neighbour %llu\n", (unsigned long long)ids[0]);
        return 1;
    }

    CHECK(hnswlab_index_save(idx, ds, argv[1]));
    HnswlabIndex *loaded = NULL;
    CHECK(hnswlab_index_load(argv[1], ds, &loaded));
    uint64_t ids2[10];
    double dists2[10];
    CHECK(hnswlab_index_search(loaded, data + 17 * DIM, DIM, 10, 40, ids2, dists2, &got));
    CHECK(hnswlab_index_search(idx, data + 17 * DIM, DIM, 10, 40, ids, dists, &got));
    for (int i = 0; i < 10; i++)
        if (ids[i] != ids2[i] || dists[i] != dists2[i]) return 1;

    if (hnswlab_index_search(idx, data, DIM, 10, 5, ids, dists, &got) != HNSWLAB_STATUS_INVALID_ARGUMENT)
        return 1;
    if (hnswlab_last_error() == NULL) return 1;

    double lid[N];
    CHECK(hnswlab_lid_profile(ds, 20, HNSWLAB_METRIC_L2, lid, N));
    for (int i = 0; i < N; i++)
        if (!(lid[i] > 0.0)) return 1;

    hnswlab_index_free(loaded);
    hnswlab_index_free(idx);
    hnswlab_dataset_free(ds);
    free(data);
    printf("ok %s\n", hnswlab_version());
    return 0;
}
