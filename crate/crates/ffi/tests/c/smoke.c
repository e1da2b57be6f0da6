#include <math.h>
#include <stdio.h>

#include "nbsc.h"

#define CHECK(cond)                                                   \
    do {                                                              \
        if (!(cond)) {                                                \
            fprintf(stderr, "check failed at line %d: %s\n", __LINE__, #cond); \
            return 1;                                                 \
        }                                                             \
    } while (0)

int main(void) {
    NbscEnsemble *ens = NULL;
    CHECK(nbsc_ensemble_new(3, 6, 2, &ens) == NBSC_STATUS_OK);
    CHECK(nbsc_ensemble_m(ens) == 2);

    NbscConfig cfg = nbsc_config_default();
    double tail[2];
    size_t iters = 0;
    bool decoded = false;
    CHECK(nbsc_de_fixed_point(ens, 0.3, &cfg, tail, 2, &iters, &decoded) == NBSC_STATUS_OK);
    CHECK(decoded && iters > 0);

    double eps_bp = 0.0;
    CHECK(nbsc_bp_threshold(ens, &cfg, &eps_bp) == NBSC_STATUS_OK);
    CHECK(eps_bp > 0.42 && eps_bp < 0.43);

    double d[4];
    CHECK(nbsc_potential_d(ens, d, 4) == NBSC_STATUS_OK);
    CHECK(fabs(d[0] - 0.5) < 1e-12 && fabs(d[1] - 1.0) < 1e-12);
    CHECK(fabs(d[2] - 1.0) < 1e-12 && fabs(d[3] - 0.5) < 1e-12);

    NbscEnsemble *bad = NULL;
    CHECK(nbsc_ensemble_new(3, 3, 1, &bad) == NBSC_STATUS_INVALID_ARGUMENT);
    CHECK(bad == NULL);
    char msg[256];
    CHECK(nbsc_last_error(msg, sizeof msg) > 0);

    nbsc_ensemble_free(ens);
    printf("eps_bp=%.6f %s\n", eps_bp, nbsc_status_name(NBSC_STATUS_OK));
    return 0;
}
