/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_decoderace_free: (a: number, b: number) => void;
export const __wbg_get_decoderace_ar_decoder_calls: (a: number) => number;
export const __wbg_get_decoderace_ar_sps: (a: number) => number;
export const __wbg_get_decoderace_nar_decoder_calls: (a: number) => number;
export const __wbg_get_decoderace_nar_sps: (a: number) => number;
export const __wbg_heatmap_free: (a: number, b: number) => void;
export const __wbg_set_decoderace_ar_decoder_calls: (a: number, b: number) => void;
export const __wbg_set_decoderace_ar_sps: (a: number, b: number) => void;
export const __wbg_set_decoderace_nar_decoder_calls: (a: number, b: number) => void;
export const __wbg_set_decoderace_nar_sps: (a: number, b: number) => void;
export const attentionMap: (a: number, b: number, c: number, d: number, e: number, f: number, g: number) => [number, number, number];
export const classTrajectories: (a: number, b: number, c: number, d: number) => [number, number, number, number];
export const decodeRace: (a: number, b: number) => [number, number, number];
export const heatmap_cols: (a: number) => number;
export const heatmap_rows: (a: number) => number;
export const heatmap_values: (a: number) => [number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
