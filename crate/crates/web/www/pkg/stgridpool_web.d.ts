/* tslint:disable */
/* eslint-disable */

/**
 * Norm maps of a synthetic frame before and after norm-weighted and average pooling, as JSON.
 */
export function pool(size: number, channels: number, seed: number, beta: number, norm_order: number, kernel: number): string;

/**
 * Pyramid schedule for `n_frames` as JSON.
 */
export function schedule(n_frames: number, base_length: number, levels: number, grid_m: number, grid_n: number): string;

export function window_weights(norms: Float64Array, beta: number): Float64Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly pool: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
    readonly schedule: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
    readonly window_weights: (a: number, b: number, c: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_start: () => void;
}

export type SyncInitInput = BufferSource | WebAssembly.Module;

/**
 * Instantiates the given `module`, which can either be bytes or
 * a precompiled `WebAssembly.Module`.
 *
 * @param {{ module: SyncInitInput }} module - Passing `SyncInitInput` directly is deprecated.
 *
 * @returns {InitOutput}
 */
export function initSync(module: { module: SyncInitInput } | SyncInitInput): InitOutput;

/**
 * If `module_or_path` is {RequestInfo} or {URL}, makes a request and
 * for everything else, calls `WebAssembly.instantiate` directly.
 *
 * @param {{ module_or_path: InitInput | Promise<InitInput> }} module_or_path - Passing `InitInput` directly is deprecated.
 *
 * @returns {Promise<InitOutput>}
 */
export default function __wbg_init (module_or_path?: { module_or_path: InitInput | Promise<InitInput> } | InitInput | Promise<InitInput>): Promise<InitOutput>;
