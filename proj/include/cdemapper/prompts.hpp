// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string_view>

/// Fixed instruction and output blocks sent to the chat model. These strings
/// are part of the wire contract; tests compare them against checked-in copies.
namespace cdemapper::prompts {

inline constexpr std::string_view kQueryExpansionInstruction =
    "Your task is to enhance and rephrase the provided search terms and descriptions to optimize them for querying in Elasticsearch using BM25, ensuring they account for semantic equivalences in medical terminology. Identify and include synonyms, abbreviations, and related terms for each medical term or description, such as using \"myocardial infarction\" for \"heart attack.\" Rephrase the descriptions to include contextually relevant information while maintaining coherence and medical accuracy, ensuring that the expanded queries remain aligned with the original intent and meaning. For example, expand \"diabetes complications\" to include terms like \"diabetic complications,\" \"hyperglycemia effects,\" and \"long-term effects of diabetes.\" Similarly, rephrase descriptions to include detailed aspects, such as expanding \"Symptoms and management of type 2 diabetes\" to \"Symptoms and management of type 2 diabetes, including hyperglycemia control, insulin resistance treatment, and lifestyle changes for diabetes.\" The goal is to create comprehensive and precise queries and descriptions that enhance search accuracy in Elasticsearch using BM25.";
inline constexpr std::string_view kQueryExpansionOutput = "Return only the JSON dict of search string for terms and descriptions.";

inline constexpr std::string_view kRerankInstruction =
    "Your task is to rerank the provided search results, which are based on Elasticsearch using BM25. These results need to be adjusted to account for semantic equivalences in medical terminology. Rerank the search results based on their relevance to the query, considering this special case.";
inline constexpr std::string_view kRerankOutput = "Return only the JSON list of reranked search results.";

inline constexpr std::string_view kValueMappingInstruction =
    "Your task is to identify the most closely matched concept from the provided value sets given a value name and recalculate the score for each candidates according to semantic similarity.";
inline constexpr std::string_view kValueMappingOutput =
    "Return only the JSON list of top 1 matched records ordered by recalculated semantic similarity scores.";

} // namespace cdemapper::prompts
