/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_recommender_free: (a: number, b: number) => void;
export const colorInfo: (a: number, b: number) => [number, number, number, number];
export const deltaE: (a: number, b: number, c: number, d: number) => [number, number, number];
export const imagePalette: (a: number, b: number, c: number) => [number, number, number, number];
export const recolorPng: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
export const recommender_apply: (a: number, b: number, c: number, d: number, e: number) => [number, number];
export const recommender_new: (a: number, b: number) => [number, number, number];
export const recommender_palettes: (a: number) => [number, number];
export const recommender_preview: (a: number) => [number, number];
export const recommender_recommend: (a: number, b: number, c: number, d: number) => [number, number, number, number];
export const recommender_reset: (a: number) => void;
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
