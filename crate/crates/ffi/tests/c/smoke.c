#include <stdio.h>
#include "toasel.h"

int main(void) {
    ToaselScene *scene = NULL;
    ToaselStatus st = toasel_scene_load_file("scene.json", &scene);
    if (st != TOASEL_STATUS_OK) {
        fprintf(stderr, "%s\n", toasel_last_error_message());
        return 1;
    }
    size_t n = 0;
    toasel_scene_ap_count(scene, &n);
    double tx[3] = {1, 1, 1}, rx[3] = {4, 5, 1}, toa = 0;
    st = toasel_min_delay_toa(scene, tx, rx, 3, &toa, NULL);
    toasel_scene_free(scene);
    return st == TOASEL_STATUS_OK ? 0 : 2;
}
