#include <math.h>
#include <stdio.h>
#include "lmulm.h"

int main(void) {
    LmuSystem *sys = NULL;
    if (lmu_system_new(8.0, 4, &sys) != LMU_STATUS_OK) {
        fprintf(stderr, "new: %s\n", lmu_last_error());
        return 1;
    }
    double a[16], b[4], rho = 0.0;
    if (lmu_system_discrete(sys, a, b, &rho) != LMU_STATUS_OK || !(rho > 0.0 && rho < 1.0)) {
        return 2;
    }
    double x[10], ss[40], fft[40];
    for (int t = 0; t < 10; t++) {
        x[t] = t == 0 ? 1.0 : 0.0;
    }
    if (lmu_system_run(sys, LMU_BACKEND_STATE_SPACE, x, 10, 1, ss) != LMU_STATUS_OK
        || lmu_system_run(sys, LMU_BACKEND_FFT, x, 10, 1, fft) != LMU_STATUS_OK) {
        return 3;
    }
    for (int k = 0; k < 40; k++) {
        if (fabs(ss[k] - fft[k]) > 1e-10) {
            return 4;
        }
    }
    if (lmu_system_run(sys, 99, x, 10, 1, ss) != LMU_STATUS_INVALID_ARGUMENT || lmu_last_error() == NULL) {
        return 5;
    }
    lmu_system_free(sys);
    double flops = 0.0;
    if (lmu_predict_flops("ss", 64, 4, 16, 4, 2, 4, &flops) != LMU_STATUS_OK || flops != 160.0) {
        return 6;
    }
    printf("ok %s\n", lmu_version());
    return 0;
}
