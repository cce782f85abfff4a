/* tslint:disable */
/* eslint-disable */

/**
 * Median throughput and decoder calls of both decoding schemes.
 */
export class DecodeRace {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    ar_decoder_calls: number;
    ar_sps: number;
    nar_decoder_calls: number;
    nar_sps: number;
}

/**
 * Row-major matrix handed to the page for drawing.
 */
export class Heatmap {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    values(): Float64Array;
    readonly cols: number;
    readonly rows: number;
}

export function attentionMap(seed: number, _class: number, input_len: number, target_len: number, layer: number, head: number, cross: boolean): Heatmap;

export function classTrajectories(seed: number, classes: number, frames: number, noise: number): Float64Array;

export function decodeRace(target_len: number, reps: number): DecodeRace;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_decoderace_free: (a: number, b: number) => void;
    readonly __wbg_get_decoderace_ar_decoder_calls: (a: number) => number;
    readonly __wbg_get_decoderace_ar_sps: (a: number) => number;
    readonly __wbg_get_decoderace_nar_decoder_calls: (a: number) => number;
    readonly __wbg_get_decoderace_nar_sps: (a: number) => number;
    readonly __wbg_heatmap_free: (a: number, b: number) => void;
    readonly __wbg_set_decoderace_ar_decoder_calls: (a: number, b: number) => void;
    readonly __wbg_set_decoderace_ar_sps: (a: number, b: number) => void;
    readonly __wbg_set_decoderace_nar_decoder_calls: (a: number, b: number) => void;
    readonly __wbg_set_decoderace_nar_sps: (a: number, b: number) => void;
    readonly attentionMap: (a: number, b: number, c: number, d: number, e: number, f: number, g: number) => [number, number, number];
    readonly classTrajectories: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly decodeRace: (a: number, b: number) => [number, number, number];
    readonly heatmap_cols: (a: number) => number;
    readonly heatmap_rows: (a: number) => number;
    readonly heatmap_values: (a: number) => [number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
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
