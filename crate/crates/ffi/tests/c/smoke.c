#include <math.h>
#include <stdio.h>
#include <string.h>

#include "marginforge.h"

#define CHECK(cond)                                                   \
    do {                                                              \
        if (!(cond)) {                                                \
            fprintf(stderr, "line %d: %s (%s)\n", __LINE__, #cond,    \
                    mf_last_error());                                 \
            return 1;                                                 \
        }                                                             \
    } while (0)

int main(void) {
    size_t sizes[] = {2, 8, 2};
    MfModel *model = NULL;
    CHECK(mf_model_new(sizes, 3, 7, &model) == MF_STATUS_OK);

    double x[] = {0.2, 0.3, 0.7, 0.6};
    size_t labels[] = {0, 1};
    double logits[4];
    CHECK(mf_model_forward(model, x, 2, 2, logits, 4) == MF_STATUS_OK);

    double adv[4];
    CHECK(mf_pgd(model, x, 2, 2, labels, 0.1, 5, 0.0, MF_OBJECTIVE_CE_HARD, 1,
                 1.0, 0.0, 3, adv) == MF_STATUS_OK);
    for (int i = 0; i < 4; i++) CHECK(fabs(adv[i] - x[i]) <= 0.1 + 1e-12);

    double alpha[2];
    CHECK(mf_binary_search_alpha(model, x, adv, 2, 2, labels, 0.05, 2.0, 3,
                                 alpha, NULL) == MF_STATUS_OK);
    for (int i = 0; i < 2; i++) CHECK(alpha[i] > 0.0 && alpha[i] <= 1.0);

    double eps;
    CHECK(mf_eps_at(MF_SCHEDULE_KIND_CURIOUS, 1.25, 70, 8.0 / 255.0, 100, 70,
                    &eps) == MF_STATUS_OK);
    CHECK(fabs(eps - 10.0 / 255.0) < 1e-12);

    size_t bad[] = {0, 5};
    CHECK(mf_margin(model, x, 2, 2, bad, 1.0, alpha) == MF_STATUS_INVALID_LABEL);
    CHECK(strlen(mf_last_error()) > 0);
    CHECK(mf_model_forward(NULL, x, 2, 2, logits, 4) == MF_STATUS_NULL_POINTER);

    mf_model_free(model);
    printf("ok %s\n", mf_version());
    return 0;
}
