/* tslint:disable */
/* eslint-disable */

/**
 * A loaded checkpoint plus the built-in sample poster.
 */
export class Recommender {
    free(): void;
    [Symbol.dispose](): void;
    /**
     * Applies a candidate code to the poster.
     */
    apply(slot: string, code: string): void;
    constructor(checkpoint: Uint8Array);
    /**
     * Current palettes of the poster, as JSON.
     */
    palettes(): string;
    /**
     * Poster preview PNG.
     */
    preview(): Uint8Array;
    /**
     * Top-`n` candidates for a slot such as `"svg:0"`, as JSON.
     */
    recommend(slot: string, n: number): string;
    reset(): void;
}

/**
 * Lab coordinates, code and code display color of a hex color, as JSON.
 */
export function colorInfo(hex: string): string;

/**
 * CIEDE2000 between two hex colors.
 */
export function deltaE(a: string, b: string): number;

/**
 * Palette of a PNG, as a JSON array of `{hex, code, weight}`.
 */
export function imagePalette(png: Uint8Array, seed: number): string;

/**
 * Moves one palette color of a PNG to `target` and returns the new PNG.
 */
export function recolorPng(png: Uint8Array, seed: number, index: number, target: string): Uint8Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_recommender_free: (a: number, b: number) => void;
    readonly colorInfo: (a: number, b: number) => [number, number, number, number];
    readonly deltaE: (a: number, b: number, c: number, d: number) => [number, number, number];
    readonly imagePalette: (a: number, b: number, c: number) => [number, number, number, number];
    readonly recolorPng: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
    readonly recommender_apply: (a: number, b: number, c: number, d: number, e: number) => [number, number];
    readonly recommender_new: (a: number, b: number) => [number, number, number];
    readonly recommender_palettes: (a: number) => [number, number];
    readonly recommender_preview: (a: number) => [number, number];
    readonly recommender_recommend: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly recommender_reset: (a: number) => void;
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
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
