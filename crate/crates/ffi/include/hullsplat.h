#ifndef HULLSPLAT_H
#define HULLSPLAT_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stddef.h>
#include <stdint.h>

/*
 Result codes shared by every entry point.
 */
typedef enum HsStatus {
  HS_STATUS_OK = 0,
  /*
   A required pointer argument was null.
   */
  HS_STATUS_NULL_POINTER = 1,
  /*
   Bad configuration, dimensions or malformed input data.
   */
  HS_STATUS_INVALID_ARGUMENT = 2,
  /*
   File system failure.
   */
  HS_STATUS_IO = 3,
  /*
   Non-finite gradients or degenerate geometry.
   */
  HS_STATUS_NUMERICAL = 4,
  /*
   The hull is empty or the mesh is seen by no view.
   */
  HS_STATUS_EMPTY_RESULT = 5,
  /*
   A Rust panic was caught at the boundary.
   */
  HS_STATUS_INTERNAL = 6,
} HsStatus;

typedef struct HsGaussians HsGaussians;

typedef struct HsGrid HsGrid;

typedef struct HsMesh HsMesh;

typedef struct HsPoints HsPoints;

typedef struct HsScene HsScene;

typedef struct HsViews HsViews;

/*
 Message of the last failed call on this thread; empty when none. The
 pointer stays valid until the next failing call on the same thread.
 */
const char *hs_last_error_message(void);

/*
 Library version as a static NUL-terminated string.
 */
const char *hs_version(void);

/*
 The built-in checkered sphere.

 # Safety
 `out` must be a valid pointer to writable storage for a handle.
 */
enum HsStatus hs_scene_checker_sphere(struct HsScene **out);

/*
 Parses a scene from JSON text.

 # Safety
 `json` must be a NUL-terminated string and `out` a valid handle slot.
 */
enum HsStatus hs_scene_from_json(const char *json, struct HsScene **out);

/*
 # Safety
 `scene` must be null or a handle from this library, not yet freed.
 */
void hs_scene_free(struct HsScene *scene);

/*
 Renders `n_views` orbit views of `resolution` squared pixels.

 # Safety
 `scene` must be a live handle and `out` a valid handle slot.
 */
enum HsStatus hs_synth(const struct HsScene *scene,
                       uintptr_t n_views,
                       uint32_t resolution,
                       struct HsViews **out);

/*
 Loads a dataset directory (`images/`, `masks/`, `cameras.json`).

 # Safety
 `dir` must be a NUL-terminated path and `out` a valid handle slot.
 */
enum HsStatus hs_views_load(const char *dir, struct HsViews **out);

/*
 # Safety
 `views` must be a live handle and `dir` a NUL-terminated path.
 */
enum HsStatus hs_views_save(const struct HsViews *views, const char *dir);

/*
 Number of views, or 0 for a null handle.

 # Safety
 `views` must be null or a live handle.
 */
uintptr_t hs_views_count(const struct HsViews *views);

/*
 # Safety
 `views` must be null or a handle from this library, not yet freed.
 */
void hs_views_free(struct HsViews *views);

/*
 Visual hull over the default unit box.

 # Safety
 `views` must be a live handle and `out` a valid handle slot.
 */
enum HsStatus hs_carve(const struct HsViews *views, uintptr_t resolution, struct HsGrid **out);

/*
 # Safety
 `grid` must be null or a live handle.
 */
uintptr_t hs_grid_occupied_count(const struct HsGrid *grid);

/*
 Occupied volume in world units, or 0 for a null handle.

 # Safety
 `grid` must be null or a live handle.
 */
double hs_grid_volume(const struct HsGrid *grid);

/*
 # Safety
 `grid` must be null or a handle from this library, not yet freed.
 */
void hs_grid_free(struct HsGrid *grid);

/*
 Marching cubes plus `smooth_iters` rounds of smoothing; vertices start gray.

 # Safety
 `grid` must be a live handle and `out` a valid handle slot.
 */
enum HsStatus hs_mesh_extract(const struct HsGrid *grid,
                              uintptr_t smooth_iters,
                              struct HsMesh **out);

/*
 Area-uniform surface samples; `n == 0` uses the default initial count.

 # Safety
 `mesh` must be a live handle and `out` a valid handle slot.
 */
enum HsStatus hs_mesh_sample(const struct HsMesh *mesh,
                             uintptr_t n,
                             uint64_t seed,
                             struct HsPoints **out);

/*
 Refines vertex colors against the views. `config_json` may be null.

 # Safety
 `mesh` and `views` must be live handles, `config_json` null or a
 NUL-terminated string, and `out` a valid handle slot.
 */
enum HsStatus hs_mesh_refine(const struct HsMesh *mesh,
                             const struct HsViews *views,
                             const char *config_json,
                             struct HsMesh **out);

/*
 # Safety
 `mesh` must be null or a live handle.
 */
uintptr_t hs_mesh_vertex_count(const struct HsMesh *mesh);

/*
 # Safety
 `mesh` must be null or a live handle.
 */
uintptr_t hs_mesh_face_count(const struct HsMesh *mesh);

/*
 Copies vertex colors as `3 * vertex_count` doubles.

 # Safety
 `mesh` must be a live handle and `buf` must hold `len` doubles.
 */
enum HsStatus hs_mesh_colors(const struct HsMesh *mesh, double *buf, uintptr_t len);

/*
 # Safety
 `mesh` must be a live handle and `path` a NUL-terminated path.
 */
enum HsStatus hs_mesh_save_obj(const struct HsMesh *mesh, const char *path);

/*
 # Safety
 `mesh` must be null or a handle from this library, not yet freed.
 */
void hs_mesh_free(struct HsMesh *mesh);

/*
 # Safety
 `points` must be null or a live handle.
 */
uintptr_t hs_points_count(const struct HsPoints *points);

/*
 Copies positions as `3 * count` doubles.

 # Safety
 `points` must be a live handle and `buf` must hold `len` doubles.
 */
enum HsStatus hs_points_copy(const struct HsPoints *points, double *buf, uintptr_t len);

/*
 # Safety
 `path` must be a NUL-terminated path and `out` a valid handle slot.
 */
enum HsStatus hs_points_load_ply(const char *path, struct HsPoints **out);

/*
 # Safety
 `points` must be a live handle and `path` a NUL-terminated path.
 */
enum HsStatus hs_points_save_ply(const struct HsPoints *points, const char *path);

/*
 # Safety
 `points` must be null or a handle from this library, not yet freed.
 */
void hs_points_free(struct HsPoints *points);

/*
 Symmetric chamfer distance with squared nearest-neighbor distances.

 # Safety
 `a` and `b` must be live handles and `out` a valid pointer.
 */
enum HsStatus hs_chamfer(const struct HsPoints *a, const struct HsPoints *b, double *out);

/*
 Fits Gaussians seeded at `init`. `config_json` may be null.

 # Safety
 `views` and `init` must be live handles, `config_json` null or a
 NUL-terminated string, and `out` a valid handle slot.
 */
enum HsStatus hs_reconstruct(const struct HsViews *views,
                             const struct HsPoints *init,
                             const char *config_json,
                             struct HsGaussians **out);

/*
 # Safety
 `gs` must be null or a live handle.
 */
uintptr_t hs_gaussians_count(const struct HsGaussians *gs);

/*
 Renders the Gaussians from camera `view` of `views` into `buf` as
 row-major interleaved RGB doubles (`3 * width * height` values).

 # Safety
 `gs` and `views` must be live handles, `background` must point to 3
 doubles and `buf` must hold `len` doubles.
 */
enum HsStatus hs_gaussians_render(const struct HsGaussians *gs,
                                  const struct HsViews *views,
                                  uintptr_t view,
                                  const double *background,
                                  double *buf,
                                  uintptr_t len);

/*
 # Safety
 `gs` must be a live handle and `path` a NUL-terminated path.
 */
enum HsStatus hs_gaussians_save_ply(const struct HsGaussians *gs, const char *path);

/*
 # Safety
 `gs` must be null or a handle from this library, not yet freed.
 */
void hs_gaussians_free(struct HsGaussians *gs);

/*
 PSNR in dB between two interleaved RGB buffers of `width * height` pixels.

 # Safety
 `a` and `b` must each hold `3 * width * height` doubles; `out` must be valid.
 */
enum HsStatus hs_psnr(const double *a,
                      const double *b,
                      uintptr_t width,
                      uintptr_t height,
                      double *out);

#endif  /* HULLSPLAT_H */
