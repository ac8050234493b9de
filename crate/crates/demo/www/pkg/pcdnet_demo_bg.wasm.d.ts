/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_session_free: (a: number, b: number) => void;
export const __wbg_shape_free: (a: number, b: number) => void;
export const chamfer: (a: number, b: number, c: number, d: number, e: number) => [number, number, number];
export const session_new: (a: bigint) => [number, number, number];
export const session_predict: (a: number, b: number) => [number, number, number, number];
export const session_step: (a: number, b: number) => [number, number, number];
export const session_steps: (a: number) => bigint;
export const session_test_cloud: (a: number, b: number) => [number, number];
export const session_test_count: (a: number) => number;
export const session_test_image: (a: number, b: number) => [number, number];
export const shape_cloud: (a: number) => [number, number];
export const shape_new: (a: number, b: number, c: bigint, d: number, e: number) => [number, number, number];
export const shape_silhouette: (a: number) => [number, number];
export const shape_size: (a: number) => number;
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __wbindgen_start: () => void;
